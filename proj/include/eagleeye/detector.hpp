#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "eagleeye/network.hpp"
#include "eagleeye/tensor.hpp"

namespace eagleeye {

struct ProbeParams {
    int region_size = 4;       // d: side of a saliency window
    int region_count = 8;      // n: windows to select
    double ranking_c = 1.25;   // c: ranking coefficient
    int shadow_count = 4;      // k: class-changing shadows required
    double threshold = 0.625;  // genuineness cutoff (strictly-greater = genuine)
    int trials_per_level = 20;  // T: random perturbations per theta level
    double theta_resolution = 0.0;  // 0 = one expected component, 1/|pi|
    std::uint64_t seed = 0;

    void validate() const;
    ProbeParams with_seed(std::uint64_t s) const {
        ProbeParams p = *this;
        p.seed = s;
        return p;
    }
};

/// Component ordering by descending loss-gradient magnitude at the predicted
/// class. order[r] is the component holding rank r+1; rank[i] is in 1..N.
struct ComponentRanking {
    std::vector<int> order;
    std::vector<int> rank;
};

struct Region {
    int y = 0, x = 0;          // window anchor
    std::vector<int> indices;  // flat component indices, all channels
};

struct SaliencyRegionSet {
    std::vector<Region> regions;
    std::vector<int> union_indices;  // sorted, unique
};

struct TrialLevel {
    double theta = 0.0;
    int trials = 0;
    int successes = 0;
};

struct ProbeResult {
    std::optional<double> theta_star;  // empty = not found
    std::vector<TrialLevel> log;
    std::vector<Tensor> witnesses;  // class-changing inputs at theta_star

    bool found() const { return theta_star.has_value(); }
};

struct Shadow {
    Tensor x;
    int cls = -1;
    std::optional<double> probe;
};

struct ShadowSet {
    std::vector<Shadow> shadows;
};

/// Shadow generation could not collect enough class-changing variants within
/// its trial cap; the probe estimate is unstable at theta_star.
struct UnstableProbeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Verdict { Genuine, Suspicious };

struct DetectionReport {
    static constexpr int kFormatVersion = 1;

    int input_id = -1;
    int predicted_class = -1;
    std::optional<double> probe;
    std::vector<std::optional<double>> shadow_probes;
    std::vector<int> shadow_classes;
    double score = 0.0;
    Verdict verdict = Verdict::Genuine;
    std::optional<int> recovered_class;  // present iff suspicious
    bool indeterminate = false;          // probe (or shadows) unavailable
    ProbeParams params;
};

ComponentRanking rank_components(const Checkpoint& ckpt, const Tensor& x);

/// saliency(region) = sum of c^{-rank(i)} over region components not yet
/// covered by previously selected regions.
double region_saliency(const std::vector<int>& region_indices, const ComponentRanking& ranking,
                       const std::vector<bool>& covered, double c);

SaliencyRegionSet select_saliency_regions(const Checkpoint& ckpt, const Tensor& x,
                                          const ProbeParams& params);

/// Sweeps theta over {res, 2 res, ..., 1}; at each level runs T independent
/// trials drawing union components at rate theta and flipping each to its
/// farther extreme. theta_star is the lowest level with a class change.
ProbeResult estimate_probe(const Checkpoint& ckpt, const Tensor& x,
                           const SaliencyRegionSet& regions, const ProbeParams& params);

/// Flip-at-rate-theta trials until `shadow_count` class-changing shadows are
/// collected (cap: 100k trials); each shadow's own probe is estimated with
/// regions re-selected on the shadow. `witnesses` (class-changing rate-theta
/// draws already observed by the probe search) seed the set.
ShadowSet generate_shadows(const Checkpoint& ckpt, const Tensor& x, double theta_star,
                           const SaliencyRegionSet& regions, const ProbeParams& params,
                           const std::vector<Tensor>* witnesses = nullptr);

/// As generate_shadows but reports starvation instead of throwing; the
/// returned set may then hold fewer than shadow_count entries.
struct ShadowHarvest {
    ShadowSet set;
    bool starved = false;
};
ShadowHarvest harvest_shadows(const Checkpoint& ckpt, const Tensor& x, double theta_star,
                              const SaliencyRegionSet& regions, const ProbeParams& params,
                              const std::vector<Tensor>* witnesses = nullptr);

struct DifferentialOutcome {
    double score = 0.0;
    Verdict verdict = Verdict::Genuine;
};

/// score = mean over shadows of 1 / (1 + exp(1 - probe/shadow_probe));
/// genuine iff score > threshold (strict). A shadow without a probe
/// contributes the ratio->0 limit 1/(1+e).
DifferentialOutcome differential_analysis(double probe,
                                          const std::vector<std::optional<double>>& shadow_probes,
                                          double threshold);

/// Modal shadow class; ties go to the class with the larger mean probability
/// mass over the shadow set, then to the lower index.
int consensus_analysis(const ShadowSet& shadows, const Checkpoint& ckpt);

/// Full pipeline: regions -> probe -> shadows -> differential analysis, and
/// consensus only for suspicious verdicts.
DetectionReport analyze(const Checkpoint& ckpt, const Tensor& x, const ProbeParams& params,
                        int input_id = -1);

}  // namespace eagleeye
