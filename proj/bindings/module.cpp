// Python bindings for the core operations: model building and training,
// the four crafting attacks, radius probing, and tampering analysis.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "eagleeye/attacks.hpp"
#include "eagleeye/bench.hpp"
#include "eagleeye/config.hpp"
#include "eagleeye/dataset.hpp"
#include "eagleeye/detector.hpp"
#include "eagleeye/network.hpp"
#include "eagleeye/trainer.hpp"

namespace py = pybind11;
using namespace eagleeye;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    std::vector<int> shape;
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape.push_back(static_cast<int>(a.shape(i)));
    std::vector<double> data(a.data(), a.data() + a.size());
    return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape;
    for (int i = 0; i < t.rank(); ++i) shape.push_back(t.dim(i));
    py::array_t<double> a(shape);
    std::copy(t.data(), t.data() + t.numel(), a.mutable_data());
    return a;
}

Dataset dataset_from_arrays(const py::array_t<double, py::array::c_style | py::array::forcecast>& images,
                            const std::vector<int>& labels) {
    Dataset d;
    d.images = tensor_from_array(images);
    d.labels = labels;
    return d;
}

TrainConfig train_config_from_dict(const py::dict& opts) {
    TrainConfig cfg;
    for (auto item : opts) {
        const std::string key = py::cast<std::string>(item.first);
        if (key == "learning_rate") cfg.learning_rate = py::cast<double>(item.second);
        else if (key == "momentum") cfg.momentum = py::cast<double>(item.second);
        else if (key == "batch") cfg.batch = py::cast<int>(item.second);
        else if (key == "epochs") cfg.epochs = py::cast<int>(item.second);
        else if (key == "seed") cfg.seed = py::cast<std::uint64_t>(item.second);
        else if (key == "temperature") cfg.temperature = py::cast<double>(item.second);
        else if (key == "s_improve") cfg.s_improve = py::cast<double>(item.second);
        else if (key == "s_worsen") cfg.s_worsen = py::cast<double>(item.second);
        else if (key == "tau") cfg.defense.distill_tau = py::cast<double>(item.second);
        else if (key == "alpha") cfg.defense.alpha = py::cast<double>(item.second);
        else if (key == "budget") cfg.defense.budget = py::cast<double>(item.second);
        else if (key == "norm") cfg.defense.norm = robust_norm_from_name(py::cast<std::string>(item.second));
        else if (key == "stop_at_eval_accuracy") cfg.stop_at_eval_accuracy = py::cast<double>(item.second);
        else throw std::invalid_argument("unknown train option: " + key);
    }
    return cfg;
}

AttackConfig attack_config_from_dict(const py::dict& opts) {
    AttackConfig cfg;
    for (auto item : opts) {
        const std::string key = py::cast<std::string>(item.first);
        if (key == "kind") cfg.kind = attack_kind_from_name(py::cast<std::string>(item.second));
        else if (key == "target") cfg.target = py::cast<int>(item.second);
        else if (key == "true_label") cfg.true_label = py::cast<int>(item.second);
        else if (key == "delta_budget") cfg.delta_budget = py::cast<double>(item.second);
        else if (key == "delta_resolution") cfg.delta_resolution = py::cast<double>(item.second);
        else if (key == "pixel_budget") cfg.pixel_budget = py::cast<int>(item.second);
        else if (key == "temperature") cfg.temperature_override = py::cast<double>(item.second);
        else if (key == "seed") cfg.seed = py::cast<std::uint64_t>(item.second);
        else throw std::invalid_argument("unknown attack option: " + key);
    }
    return cfg;
}

ProbeParams probe_params_from_dict(const py::dict& opts) {
    ProbeParams p;
    for (auto item : opts) {
        const std::string key = py::cast<std::string>(item.first);
        if (key == "region_size") p.region_size = py::cast<int>(item.second);
        else if (key == "regions") p.region_count = py::cast<int>(item.second);
        else if (key == "ranking_c") p.ranking_c = py::cast<double>(item.second);
        else if (key == "shadows") p.shadow_count = py::cast<int>(item.second);
        else if (key == "threshold") p.threshold = py::cast<double>(item.second);
        else if (key == "trials") p.trials_per_level = py::cast<int>(item.second);
        else if (key == "theta_resolution") p.theta_resolution = py::cast<double>(item.second);
        else if (key == "seed") p.seed = py::cast<std::uint64_t>(item.second);
        else throw std::invalid_argument("unknown probe option: " + key);
    }
    return p;
}

py::dict report_to_dict(const TrainReport& r) {
    py::list epochs;
    for (const EpochStats& e : r.epochs) {
        py::dict d;
        d["epoch"] = e.epoch;
        d["loss"] = e.loss;
        d["accuracy"] = e.accuracy;
        d["lr"] = e.learning_rate;
        if (e.eval_accuracy) d["eval_accuracy"] = *e.eval_accuracy;
        epochs.append(d);
    }
    py::dict d;
    d["epochs"] = epochs;
    d["final_loss"] = r.final_loss;
    d["early_stopped"] = r.early_stopped;
    return d;
}

py::dict attack_to_dict(const AttackResult& r) {
    py::dict d;
    d["kind"] = attack_kind_name(r.kind);
    d["success"] = r.success;
    d["x_adv"] = array_from_tensor(r.x_adv);
    d["perturbation"] = array_from_tensor(r.perturbation);
    d["class_before"] = r.class_before;
    d["class_after"] = r.class_after;
    d["target"] = r.target;
    d["iterations"] = r.iterations;
    d["amplitude"] = r.amplitude;
    return d;
}

py::dict detection_to_dict(const DetectionReport& r) {
    py::dict d;
    d["input_id"] = r.input_id;
    d["class"] = r.predicted_class;
    d["probe"] = r.probe ? py::cast(*r.probe) : py::none();
    py::list sp;
    for (const auto& p : r.shadow_probes) sp.append(p ? py::cast(*p) : py::none());
    d["shadow_probes"] = sp;
    d["shadow_classes"] = py::cast(r.shadow_classes);
    d["score"] = r.score;
    d["verdict"] = r.verdict == Verdict::Genuine ? "genuine" : "suspicious";
    d["recovered_class"] = r.recovered_class ? py::cast(*r.recovered_class) : py::none();
    d["indeterminate"] = r.indeterminate;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "adversarial-input laboratory core";

    py::class_<NetworkSpec>(m, "NetworkSpec")
        .def_property_readonly("classes", [](const NetworkSpec& s) { return s.classes; })
        .def_property_readonly("input_shape", [](const NetworkSpec& s) { return s.input_shape; })
        .def("parameter_count", &NetworkSpec::parameter_count);

    py::class_<Checkpoint>(m, "Checkpoint")
        .def_property_readonly("classes", [](const Checkpoint& c) { return c.spec.classes; })
        .def_property_readonly("temperature", [](const Checkpoint& c) { return c.meta.temperature; })
        .def("save", [](const Checkpoint& c, const std::string& path) { save_checkpoint(c, path); });

    m.def("load_checkpoint", &load_checkpoint);
    m.def("build_mnist_cnn", &build_mnist_cnn, py::arg("scale") = 1.0);
    m.def("build_synthetic_mlp", &build_synthetic_mlp, py::arg("input_dim"), py::arg("hidden"),
          py::arg("classes"));

    m.def(
        "train",
        [](const NetworkSpec& spec, const py::array_t<double>& images,
           const std::vector<int>& labels, const py::dict& opts) {
            Dataset d = dataset_from_arrays(images, labels);
            TrainOutcome out = train(spec, d, train_config_from_dict(opts));
            return py::make_tuple(out.checkpoint, report_to_dict(out.report));
        },
        py::arg("spec"), py::arg("images"), py::arg("labels"), py::arg("opts") = py::dict());

    m.def(
        "distill",
        [](const NetworkSpec& spec, const py::array_t<double>& images,
           const std::vector<int>& labels, const py::dict& opts) {
            Dataset d = dataset_from_arrays(images, labels);
            DistillOutcome out = distill(spec, d, train_config_from_dict(opts));
            return py::make_tuple(out.teacher, out.student);
        },
        py::arg("spec"), py::arg("images"), py::arg("labels"), py::arg("opts") = py::dict());

    m.def(
        "classify",
        [](const Checkpoint& c, const py::array_t<double>& x, double temperature) {
            auto [cls, probs] = classify_with_probs(c, tensor_from_array(x), temperature);
            return py::make_tuple(cls, array_from_tensor(probs));
        },
        py::arg("checkpoint"), py::arg("x"), py::arg("temperature") = 1.0);

    m.def("confidence", [](const Checkpoint& c, const py::array_t<double>& x) {
        return confidence(c, tensor_from_array(x));
    });
    m.def("frobenius_radius_bound", [](const Checkpoint& c, const py::array_t<double>& x) {
        return frobenius_radius_bound(c, tensor_from_array(x));
    });
    m.def(
        "input_jacobian",
        [](const Checkpoint& c, const py::array_t<double>& x, double temperature) {
            return array_from_tensor(input_jacobian(c, tensor_from_array(x), temperature));
        },
        py::arg("checkpoint"), py::arg("x"), py::arg("temperature") = 1.0);

    m.def(
        "attack",
        [](const Checkpoint& c, const py::array_t<double>& x, const py::dict& opts) {
            return attack_to_dict(run_attack(c, tensor_from_array(x), attack_config_from_dict(opts)));
        },
        py::arg("checkpoint"), py::arg("x"), py::arg("opts") = py::dict());

    m.def(
        "analyze",
        [](const Checkpoint& c, const py::array_t<double>& x, const py::dict& opts, int input_id) {
            return detection_to_dict(
                analyze(c, tensor_from_array(x), probe_params_from_dict(opts), input_id));
        },
        py::arg("checkpoint"), py::arg("x"), py::arg("opts") = py::dict(),
        py::arg("input_id") = -1);

    m.def(
        "synth_digits",
        [](int per_class, std::uint64_t seed, const std::string& split) {
            Dataset d = synth_digits(per_class, seed, split);
            return py::make_tuple(array_from_tensor(d.images), d.labels);
        },
        py::arg("per_class"), py::arg("seed") = 1, py::arg("split") = "train");

    m.def(
        "synth_blobs",
        [](int classes, int per_class, double spread, std::uint64_t seed) {
            Dataset d = synth_blobs(classes, per_class, spread, seed);
            return py::make_tuple(array_from_tensor(d.images), d.labels);
        },
        py::arg("classes"), py::arg("per_class"), py::arg("spread") = 0.15, py::arg("seed") = 1);

    m.def("load_idx", [](const std::string& images, const std::string& labels) {
        Dataset d = load_idx(images, labels);
        return py::make_tuple(array_from_tensor(d.images), d.labels);
    });

    m.def("precision_recall", [](long tp, long fp, long fn, long tn) {
        ConfusionCounts c{tp, fp, fn, tn};
        PrecisionRecall pr = precision_recall(c);
        return py::make_tuple(pr.precision ? py::cast(*pr.precision) : py::none(),
                              pr.recall ? py::cast(*pr.recall) : py::none());
    });

    m.attr("__version__") = "0.1.0";
}
