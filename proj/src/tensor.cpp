#include "eagleeye/tensor.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace eagleeye {

std::int64_t Tensor::checked_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d < 0) throw std::invalid_argument("tensor: negative extent");
        n *= d;
    }
    return n;
}

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
}

std::size_t Tensor::flat_index(std::initializer_list<int> idx) const {
    if (static_cast<int>(idx.size()) != rank())
        throw std::invalid_argument("tensor: index rank mismatch");
    std::int64_t flat = 0;
    int i = 0;
    for (int v : idx) {
        if (v < 0 || v >= shape_[static_cast<std::size_t>(i)])
            throw std::out_of_range("tensor: index out of range");
        flat = flat * shape_[static_cast<std::size_t>(i)] + v;
        ++i;
    }
    return static_cast<std::size_t>(flat);
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
    Tensor t(std::move(shape), data_);
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ',';
        os << shape_[i];
    }
    os << ']';
    return os.str();
}

void ensure_finite(const Tensor& t, const char* context) {
    if (!t.all_finite())
        throw std::runtime_error(std::string("non-finite value in ") + context);
}

void ensure_same_shape(const Tensor& a, const Tensor& b, const char* context) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(context) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
}

Tensor add(const Tensor& a, const Tensor& b) {
    ensure_same_shape(a, b, "add");
    Tensor out(a.shape());
    for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    ensure_same_shape(a, b, "sub");
    Tensor out(a.shape());
    for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] - b[i];
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    ensure_same_shape(a, b, "mul");
    Tensor out(a.shape());
    for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
    return out;
}

Tensor scale(const Tensor& a, double s) {
    Tensor out(a.shape());
    for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * s;
    return out;
}

Tensor axpy(double alpha, const Tensor& x, const Tensor& y) {
    ensure_same_shape(x, y, "axpy");
    Tensor out(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = alpha * x[i] + y[i];
    return out;
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    Tensor out(a.shape());
    for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = std::min(hi, std::max(lo, a[i]));
    return out;
}

Tensor sign(const Tensor& a) {
    Tensor out(a.shape());
    for (std::int64_t i = 0; i < a.numel(); ++i)
        out[i] = a[i] > 0.0 ? 1.0 : (a[i] < 0.0 ? -1.0 : 0.0);
    return out;
}

double sum(const Tensor& a) {
    double s = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) s += a[i];
    return s;
}

double dot(const Tensor& a, const Tensor& b) {
    ensure_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
    return s;
}

double norm_l1(const Tensor& a) {
    double s = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) s += std::abs(a[i]);
    return s;
}

double norm_l2(const Tensor& a) {
    double s = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) s += a[i] * a[i];
    return std::sqrt(s);
}

double norm_linf(const Tensor& a) {
    double s = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) s = std::max(s, std::abs(a[i]));
    return s;
}

double frobenius_norm(const Tensor& a) { return norm_l2(a); }

std::int64_t argmax_lowest(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("argmax of empty span");
    std::int64_t best = 0;
    for (std::int64_t i = 1; i < static_cast<std::int64_t>(v.size()); ++i)
        if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
    return best;
}

}  // namespace eagleeye
