#include "eagleeye/dataset.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "eagleeye/parallel.hpp"
#include "eagleeye/rng.hpp"

namespace eagleeye {

Tensor Dataset::example(int i) const {
    if (i < 0 || i >= size()) throw std::out_of_range("dataset: example index");
    std::vector<int> shape(images.shape().begin() + 1, images.shape().end());
    std::int64_t stride = 1;
    for (int d : shape) stride *= d;
    Tensor out(shape);
    std::memcpy(out.data(), images.data() + static_cast<std::int64_t>(i) * stride,
                static_cast<std::size_t>(stride) * sizeof(double));
    return out;
}

Dataset Dataset::head(int n) const {
    if (n < 0 || n > size()) throw std::out_of_range("dataset: head size");
    std::vector<int> shape = images.shape();
    shape[0] = n;
    std::int64_t stride = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) stride *= shape[i];
    Tensor imgs(shape);
    std::memcpy(imgs.data(), images.data(),
                static_cast<std::size_t>(stride) * n * sizeof(double));
    Dataset out;
    out.images = std::move(imgs);
    out.labels.assign(labels.begin(), labels.begin() + n);
    out.split = split;
    return out;
}

// --------------------------------------------------------------------------
// IDX

namespace {

constexpr std::uint32_t kIdxImagesMagic = 2051;
constexpr std::uint32_t kIdxLabelsMagic = 2049;

std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("idx: truncated header in " + path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_u32_be(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream fi(images_path, std::ios::binary);
    if (!fi) throw std::runtime_error("idx: cannot open " + images_path);
    const std::uint32_t magic_i = read_u32_be(fi, images_path);
    if (magic_i != kIdxImagesMagic)
        throw std::runtime_error("idx: bad image magic " + std::to_string(magic_i) + " in " +
                                 images_path);
    const std::uint32_t n = read_u32_be(fi, images_path);
    const std::uint32_t rows = read_u32_be(fi, images_path);
    const std::uint32_t cols = read_u32_be(fi, images_path);
    std::vector<unsigned char> pixels(static_cast<std::size_t>(n) * rows * cols);
    fi.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (fi.gcount() != static_cast<std::streamsize>(pixels.size()))
        throw std::runtime_error("idx: truncated image payload in " + images_path);

    std::ifstream fl(labels_path, std::ios::binary);
    if (!fl) throw std::runtime_error("idx: cannot open " + labels_path);
    const std::uint32_t magic_l = read_u32_be(fl, labels_path);
    if (magic_l != kIdxLabelsMagic)
        throw std::runtime_error("idx: bad label magic " + std::to_string(magic_l) + " in " +
                                 labels_path);
    const std::uint32_t nl = read_u32_be(fl, labels_path);
    if (nl != n)
        throw std::runtime_error("idx: image/label count mismatch (" + std::to_string(n) + " vs " +
                                 std::to_string(nl) + ")");
    std::vector<unsigned char> raw_labels(nl);
    fl.read(reinterpret_cast<char*>(raw_labels.data()), static_cast<std::streamsize>(nl));
    if (fl.gcount() != static_cast<std::streamsize>(nl))
        throw std::runtime_error("idx: truncated label payload in " + labels_path);

    Dataset d;
    d.images = Tensor({static_cast<int>(n), 1, static_cast<int>(rows), static_cast<int>(cols)});
    for (std::size_t i = 0; i < pixels.size(); ++i)
        d.images[static_cast<std::int64_t>(i)] = static_cast<double>(pixels[i]) / 127.5 - 1.0;
    d.labels.assign(raw_labels.begin(), raw_labels.end());
    return d;
}

void save_idx(const Dataset& data, const std::string& images_path,
              const std::string& labels_path) {
    if (data.images.rank() != 4 || data.images.dim(1) != 1)
        throw std::invalid_argument("idx: writer expects [N,1,H,W] images");
    const int n = data.images.dim(0), rows = data.images.dim(2), cols = data.images.dim(3);
    if (static_cast<int>(data.labels.size()) != n)
        throw std::invalid_argument("idx: image/label count mismatch");

    std::ofstream fi(images_path, std::ios::binary);
    if (!fi) throw std::runtime_error("idx: cannot write " + images_path);
    write_u32_be(fi, kIdxImagesMagic);
    write_u32_be(fi, static_cast<std::uint32_t>(n));
    write_u32_be(fi, static_cast<std::uint32_t>(rows));
    write_u32_be(fi, static_cast<std::uint32_t>(cols));
    std::vector<unsigned char> pixels(static_cast<std::size_t>(data.images.numel()));
    for (std::int64_t i = 0; i < data.images.numel(); ++i) {
        const double v = (data.images[i] + 1.0) * 127.5;
        const long q = std::lround(std::min(255.0, std::max(0.0, v)));
        pixels[static_cast<std::size_t>(i)] = static_cast<unsigned char>(q);
    }
    fi.write(reinterpret_cast<const char*>(pixels.data()),
             static_cast<std::streamsize>(pixels.size()));
    if (!fi) throw std::runtime_error("idx: write failed for " + images_path);

    std::ofstream fl(labels_path, std::ios::binary);
    if (!fl) throw std::runtime_error("idx: cannot write " + labels_path);
    write_u32_be(fl, kIdxLabelsMagic);
    write_u32_be(fl, static_cast<std::uint32_t>(n));
    for (int i = 0; i < n; ++i) {
        const unsigned char b = static_cast<unsigned char>(data.labels[static_cast<std::size_t>(i)]);
        fl.write(reinterpret_cast<const char*>(&b), 1);
    }
    if (!fl) throw std::runtime_error("idx: write failed for " + labels_path);
}

// --------------------------------------------------------------------------
// Synthetic blobs

Dataset synth_blobs(int classes, int per_class, double spread, std::uint64_t seed) {
    if (classes < 2) throw std::invalid_argument("synth_blobs: classes must be >= 2");
    if (per_class < 1) throw std::invalid_argument("synth_blobs: per_class must be >= 1");
    const int n = classes * per_class;
    Dataset d;
    d.images = Tensor({n, 2});
    d.labels.resize(static_cast<std::size_t>(n));
    d.split = "synth-blobs";
    int row = 0;
    for (int c = 0; c < classes; ++c) {
        const double angle = 2.0 * M_PI * c / classes;
        const double cx = std::cos(angle), cy = std::sin(angle);
        RngStream rng(seed, "blobs", c);
        for (int i = 0; i < per_class; ++i, ++row) {
            double x = cx + spread * rng.normal();
            double y = cy + spread * rng.normal();
            d.images[static_cast<std::int64_t>(row) * 2 + 0] = std::min(1.0, std::max(-1.0, x));
            d.images[static_cast<std::int64_t>(row) * 2 + 1] = std::min(1.0, std::max(-1.0, y));
            d.labels[static_cast<std::size_t>(row)] = c;
        }
    }
    return d;
}

// --------------------------------------------------------------------------
// Synthetic digits

namespace {

struct P {
    double x, y;
};
using Stroke = std::vector<P>;

Stroke arc(double cx, double cy, double rx, double ry, double deg0, double deg1, int n = 24) {
    Stroke s;
    s.reserve(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) {
        const double a = (deg0 + (deg1 - deg0) * i / n) * M_PI / 180.0;
        s.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
    }
    return s;
}

Stroke line(std::initializer_list<P> pts) { return Stroke(pts); }

// Canvas is the unit square, x right, y down.
std::vector<Stroke> digit_strokes(int digit) {
    switch (digit) {
        case 0:
            return {arc(0.50, 0.50, 0.24, 0.36, 0, 360, 40)};
        case 1:
            return {line({{0.36, 0.30}, {0.54, 0.13}}), line({{0.54, 0.13}, {0.54, 0.87}})};
        case 2:
            return {arc(0.50, 0.32, 0.22, 0.20, 175, 345),
                    line({{0.71, 0.27}, {0.28, 0.84}}), line({{0.28, 0.84}, {0.74, 0.84}})};
        case 3:
            return {arc(0.47, 0.30, 0.21, 0.18, -130, 115),
                    arc(0.47, 0.66, 0.22, 0.20, -115, 140)};
        case 4:
            return {line({{0.58, 0.12}, {0.22, 0.58}}), line({{0.22, 0.58}, {0.78, 0.58}}),
                    line({{0.58, 0.12}, {0.58, 0.88}})};
        case 5:
            return {line({{0.70, 0.14}, {0.32, 0.14}}), line({{0.32, 0.14}, {0.30, 0.45}}),
                    line({{0.30, 0.45}, {0.46, 0.42}}),
                    arc(0.46, 0.64, 0.23, 0.22, -85, 160)};
        case 6:
            return {arc(0.50, 0.42, 0.24, 0.30, -70, -185),
                    line({{0.265, 0.40}, {0.275, 0.63}}),
                    arc(0.48, 0.66, 0.21, 0.19, 0, 360, 32)};
        case 7:
            return {line({{0.26, 0.14}, {0.74, 0.14}}), line({{0.74, 0.14}, {0.42, 0.86}})};
        case 8:
            return {arc(0.50, 0.30, 0.17, 0.17, 0, 360, 32),
                    arc(0.50, 0.66, 0.21, 0.20, 0, 360, 32)};
        case 9:
            return {arc(0.52, 0.34, 0.20, 0.20, 0, 360, 32),
                    line({{0.72, 0.34}, {0.70, 0.60}}), line({{0.70, 0.60}, {0.62, 0.86}})};
        default:
            throw std::invalid_argument("digit_strokes: digit out of range");
    }
}

double dist_to_segment(double px, double py, const P& a, const P& b) {
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double wx = px - a.x, wy = py - a.y;
    const double vv = vx * vx + vy * vy;
    double t = vv > 0.0 ? (wx * vx + wy * vy) / vv : 0.0;
    t = std::min(1.0, std::max(0.0, t));
    const double dx = px - (a.x + t * vx), dy = py - (a.y + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

void render_digit(int digit, RngStream& rng, unsigned char* out28x28) {
    // per-sample geometric jitter
    const double rot = (rng.uniform01() * 2.0 - 1.0) * 20.0 * M_PI / 180.0;
    const double sx = 0.70 + rng.uniform01() * 0.48;
    const double sy = 0.70 + rng.uniform01() * 0.48;
    const double shear = (rng.uniform01() * 2.0 - 1.0) * 0.26;
    const double tx = (rng.uniform01() * 2.0 - 1.0) * 0.12;
    const double ty = (rng.uniform01() * 2.0 - 1.0) * 0.10;
    const double half_width = 0.018 + rng.uniform01() * 0.026;
    const double ink = 0.60 + rng.uniform01() * 0.40;
    const double cr = std::cos(rot), sr = std::sin(rot);

    auto xf = [&](P p) {
        double x = p.x - 0.5, y = p.y - 0.5;
        x *= sx;
        y *= sy;
        x += shear * y;
        const double rx2 = cr * x - sr * y;
        const double ry2 = sr * x + cr * y;
        return P{rx2 + 0.5 + tx, ry2 + 0.5 + ty};
    };

    std::vector<Stroke> strokes;
    for (const Stroke& s : digit_strokes(digit)) {
        Stroke t;
        t.reserve(s.size());
        for (const P& p : s) {
            P q = xf(p);
            q.x += rng.normal() * 0.012;
            q.y += rng.normal() * 0.012;
            t.push_back(q);
        }
        strokes.push_back(std::move(t));
    }

    const double soft = 0.020;  // anti-alias falloff, about half a pixel
    for (int py = 0; py < 28; ++py) {
        for (int px = 0; px < 28; ++px) {
            const double ux = (px + 0.5) / 28.0, uy = (py + 0.5) / 28.0;
            double d = 1e9;
            for (const Stroke& s : strokes)
                for (std::size_t i = 0; i + 1 < s.size(); ++i)
                    d = std::min(d, dist_to_segment(ux, uy, s[i], s[i + 1]));
            double cov = (half_width + soft - d) / soft;
            cov = std::min(1.0, std::max(0.0, cov));
            double v = ink * cov + rng.normal() * 0.035;
            v = std::min(1.0, std::max(0.0, v));
            out28x28[py * 28 + px] = static_cast<unsigned char>(std::lround(v * 255.0));
        }
    }
}

}  // namespace

Dataset synth_digits(int per_class, std::uint64_t seed, const std::string& split) {
    if (per_class < 1) throw std::invalid_argument("synth_digits: per_class must be >= 1");
    const int n = 10 * per_class;
    Dataset d;
    d.images = Tensor({n, 1, 28, 28});
    d.labels.resize(static_cast<std::size_t>(n));
    d.split = split;

    std::vector<unsigned char> pixels(static_cast<std::size_t>(n) * 28 * 28);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
        const int digit = static_cast<int>(i) % 10;
        RngStream rng(seed, "digits", split, static_cast<std::uint64_t>(i));
        render_digit(digit, rng, pixels.data() + i * 28 * 28);
    });

    for (int i = 0; i < n; ++i) d.labels[static_cast<std::size_t>(i)] = i % 10;
    for (std::int64_t i = 0; i < d.images.numel(); ++i)
        d.images[i] = static_cast<double>(pixels[static_cast<std::size_t>(i)]) / 127.5 - 1.0;
    return d;
}

}  // namespace eagleeye
