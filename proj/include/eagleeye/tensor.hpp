#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace eagleeye {

/// Dense row-major tensor of f64 values. Shapes are lists of non-negative
/// extents; product(shape) always equals data size. Tensors are treated as
/// immutable once handed to a consumer; builders fill them in place.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape)
        : shape_(std::move(shape)), data_(checked_numel(shape_), 0.0) {}

    Tensor(std::vector<int> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (checked_numel(shape_) != static_cast<std::int64_t>(data_.size()))
            throw std::invalid_argument("tensor: shape/data size mismatch");
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double v);
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    double& at(std::initializer_list<int> idx) { return data_[flat_index(idx)]; }
    double at(std::initializer_list<int> idx) const { return data_[flat_index(idx)]; }

    /// Same data, new shape; element count must match.
    Tensor reshaped(std::vector<int> shape) const;

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;

    bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

    std::string shape_str() const;

private:
    static std::int64_t checked_numel(const std::vector<int>& shape);
    std::size_t flat_index(std::initializer_list<int> idx) const;

    std::vector<int> shape_;
    std::vector<double> data_;
};

// Elementwise helpers. Every routine validates shapes and finiteness of the
// result; a non-finite output is reported, never returned silently.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor axpy(double alpha, const Tensor& x, const Tensor& y);  // alpha*x + y
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor sign(const Tensor& a);  // sign(0) = 0

double sum(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);
double norm_l1(const Tensor& a);
double norm_l2(const Tensor& a);
double norm_linf(const Tensor& a);
double frobenius_norm(const Tensor& a);
std::int64_t argmax_lowest(std::span<const double> v);  // ties -> lowest index

void ensure_finite(const Tensor& t, const char* context);
void ensure_same_shape(const Tensor& a, const Tensor& b, const char* context);

}  // namespace eagleeye
