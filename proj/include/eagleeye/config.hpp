#pragma once

#include <string>

#include "eagleeye/attacks.hpp"
#include "eagleeye/bench.hpp"
#include "eagleeye/detector.hpp"
#include "eagleeye/trainer.hpp"

namespace eagleeye {

struct DatasetConfig {
    std::string source = "synth-digits";  // synth-digits | synth-blobs | idx
    // synth-digits
    int train_per_class = 1000;
    int test_per_class = 200;
    // synth-blobs
    int blob_classes = 3;
    int blob_per_class = 200;
    double blob_spread = 0.15;
    // idx files
    std::string train_images, train_labels, test_images, test_labels;
};

struct ModelConfig {
    std::string arch = "mnist-cnn";  // mnist-cnn | mlp
    double scale = 0.25;
    int input_dim = 2;
    std::vector<int> hidden{16};
    int classes = 10;
};

struct BenchPools {
    int resilience = 200;
    int ratios = 200;
    int counter = 48;
    int synergy = 200;
};

/// One experiment description: seed, data, model, training, attack, probing
/// and output directory. Every default matches the documented lab defaults.
struct RunConfig {
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    DatasetConfig dataset;
    ModelConfig model;
    TrainConfig train;
    AttackConfig attack;
    ProbeParams probe;
    BenchPools bench;
    unsigned threads = 0;
};

RunConfig load_run_config(const std::string& path);

struct LoadedData {
    Dataset train;
    Dataset test;
};

LoadedData load_dataset(const RunConfig& cfg);
NetworkSpec build_model(const RunConfig& cfg);

}  // namespace eagleeye
