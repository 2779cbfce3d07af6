#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "eagleeye/network.hpp"

namespace eagleeye {

namespace {

// %.17g guarantees that strtod recovers the exact f64 bit pattern.
void write_double(std::FILE* f, double v) { std::fprintf(f, "%.17g", v); }

void write_layer(std::FILE* f, const LayerSpec& l) {
    std::fprintf(f, "{\"kind\":\"%s\"", layer_kind_name(l.kind));
    switch (l.kind) {
        case LayerKind::Conv2d:
            std::fprintf(f, ",\"filters\":%d,\"kernel\":%d,\"padding\":%d", l.filters, l.kernel,
                         l.padding);
            break;
        case LayerKind::MaxPool2d:
            std::fprintf(f, ",\"window\":%d,\"stride\":%d", l.window, l.stride);
            break;
        case LayerKind::Affine:
            std::fprintf(f, ",\"units\":%d", l.units);
            break;
        case LayerKind::Dropout:
            std::fprintf(f, ",\"rate\":");
            write_double(f, l.rate);
            break;
        default:
            break;
    }
    std::fprintf(f, "}");
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
    std::fprintf(f, "{\n\"format_version\":%d,\n", Checkpoint::kFormatVersion);
    std::fprintf(f, "\"network\":{\"input_shape\":[");
    for (std::size_t i = 0; i < c.spec.input_shape.size(); ++i)
        std::fprintf(f, "%s%d", i ? "," : "", c.spec.input_shape[i]);
    std::fprintf(f, "],\"classes\":%d,\"layers\":[", c.spec.classes);
    for (std::size_t i = 0; i < c.spec.layers.size(); ++i) {
        if (i) std::fprintf(f, ",");
        write_layer(f, c.spec.layers[i]);
    }
    std::fprintf(f, "]},\n");
    std::fprintf(f, "\"meta\":{\"epochs\":%d,\"final_loss\":", c.meta.epochs);
    write_double(f, c.meta.final_loss);
    std::fprintf(f, ",\"temperature\":");
    write_double(f, c.meta.temperature);
    std::fprintf(f, "},\n\"params\":[\n");
    bool first = true;
    for (const auto& [name, t] : c.params) {
        if (!first) std::fprintf(f, ",\n");
        first = false;
        std::fprintf(f, "{\"name\":\"%s\",\"shape\":[", name.c_str());
        for (int i = 0; i < t.rank(); ++i) std::fprintf(f, "%s%d", i ? "," : "", t.dim(i));
        std::fprintf(f, "],\"values\":[");
        for (std::int64_t i = 0; i < t.numel(); ++i) {
            if (i) std::fprintf(f, ",");
            write_double(f, t[i]);
        }
        std::fprintf(f, "]}");
    }
    std::fprintf(f, "\n]\n}\n");
    if (std::fclose(f) != 0) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("load_checkpoint: parse error in " + path + ": " + e.what());
    }

    const int version = j.at("format_version").get<int>();
    if (version != Checkpoint::kFormatVersion)
        throw std::runtime_error("load_checkpoint: unsupported format version " +
                                 std::to_string(version));

    Checkpoint c;
    const auto& net = j.at("network");
    c.spec.input_shape = net.at("input_shape").get<std::vector<int>>();
    c.spec.classes = net.at("classes").get<int>();
    for (const auto& jl : net.at("layers")) {
        LayerSpec l;
        l.kind = layer_kind_from_name(jl.at("kind").get<std::string>());
        switch (l.kind) {
            case LayerKind::Conv2d:
                l.filters = jl.at("filters").get<int>();
                l.kernel = jl.at("kernel").get<int>();
                l.padding = jl.at("padding").get<int>();
                break;
            case LayerKind::MaxPool2d:
                l.window = jl.at("window").get<int>();
                l.stride = jl.at("stride").get<int>();
                break;
            case LayerKind::Affine:
                l.units = jl.at("units").get<int>();
                break;
            case LayerKind::Dropout:
                l.rate = jl.at("rate").get<double>();
                break;
            default:
                break;
        }
        c.spec.layers.push_back(l);
    }
    c.spec.validate();

    const auto& meta = j.at("meta");
    c.meta.epochs = meta.at("epochs").get<int>();
    c.meta.final_loss = meta.at("final_loss").get<double>();
    c.meta.temperature = meta.at("temperature").get<double>();

    for (const auto& jp : j.at("params")) {
        const auto name = jp.at("name").get<std::string>();
        auto shape = jp.at("shape").get<std::vector<int>>();
        auto values = jp.at("values").get<std::vector<double>>();
        c.params.emplace(name, Tensor(std::move(shape), std::move(values)));
    }

    // every declared parameter must be present with the declared shape
    for (const auto& [name, shape] : c.spec.parameter_shapes()) {
        auto it = c.params.find(name);
        if (it == c.params.end())
            throw std::runtime_error("load_checkpoint: missing parameter " + name);
        if (it->second.shape() != shape)
            throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
    }
    if (c.params.size() != c.spec.parameter_shapes().size())
        throw std::runtime_error("load_checkpoint: unexpected extra parameters");
    return c;
}

}  // namespace eagleeye
