#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace gdbn {

/// Dense row-major tensor of 64-bit floats. The shape is an arbitrary list of
/// dimension sizes; product(shape) always equals data().size(). Most of the
/// model math runs on rank-2 tensors with the batch folded into rows.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<long> shape);

    static Tensor zeros(std::vector<long> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<long> shape, double v);
    static Tensor from(std::vector<long> shape, std::vector<double> data);
    static Tensor scalar(double v) { return from({1}, {v}); }
    /// Row vector (1 x n).
    static Tensor row(std::vector<double> data);

    const std::vector<long>& shape() const { return shape_; }
    long numel() const { return static_cast<long>(data_.size()); }
    long rank() const { return static_cast<long>(shape_.size()); }
    bool is_scalar() const { return numel() == 1; }

    /// Rank-2 accessors; throw on other ranks.
    long rows() const;
    long cols() const;
    double& at(long r, long c) { return data_[static_cast<size_t>(r) * cols() + c]; }
    double at(long r, long c) const { return data_[static_cast<size_t>(r) * cols() + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    double item() const;

    bool all_finite() const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    std::string shape_str() const;

    void fill(double v);

private:
    std::vector<long> shape_;
    std::vector<double> data_;
};

/// Raw matrix kernels shared by the forward ops and their vector-Jacobian
/// products. All of them accumulate into c when accumulate == true.
namespace kernels {

/// c(n x m) <- a(n x k) * b(k x m)
void mm_nn(const double* a, const double* b, double* c, long n, long k, long m, bool accumulate);
/// c(n x m) <- a^T * b where a is (k x n)
void mm_tn(const double* a, const double* b, double* c, long n, long k, long m, bool accumulate);
/// c(n x m) <- a * b^T where b is (m x k)
void mm_nt(const double* a, const double* b, double* c, long n, long k, long m, bool accumulate);

}  // namespace kernels

}  // namespace gdbn
