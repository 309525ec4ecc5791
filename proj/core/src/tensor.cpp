#include "gdbn/tensor.hpp"

#include <cmath>
#include <sstream>

namespace gdbn {

namespace {
size_t checked_numel(const std::vector<long>& shape) {
    size_t n = 1;
    for (long d : shape) {
        if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
        n *= static_cast<size_t>(d);
    }
    return n;
}
}  // namespace

Tensor::Tensor(std::vector<long> shape) : shape_(std::move(shape)) {
    data_.assign(checked_numel(shape_), 0.0);
}

Tensor Tensor::full(std::vector<long> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

Tensor Tensor::from(std::vector<long> shape, std::vector<double> data) {
    Tensor t;
    if (checked_numel(shape) != data.size()) {
        throw std::invalid_argument("Tensor::from: shape does not match data length");
    }
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
}

Tensor Tensor::row(std::vector<double> data) {
    const long n = static_cast<long>(data.size());
    return from({1, n}, std::move(data));
}

long Tensor::rows() const {
    if (rank() != 2) throw std::logic_error("Tensor::rows: rank-2 expected, got " + shape_str());
    return shape_[0];
}

long Tensor::cols() const {
    if (rank() != 2) throw std::logic_error("Tensor::cols: rank-2 expected, got " + shape_str());
    return shape_[1];
}

double Tensor::item() const {
    if (numel() != 1) throw std::logic_error("Tensor::item: tensor has " + std::to_string(numel()) + " elements");
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << 'x';
        os << shape_[i];
    }
    os << ']';
    return os.str();
}

void Tensor::fill(double v) {
    for (double& x : data_) x = v;
}

namespace kernels {

void mm_nn(const double* a, const double* b, double* c, long n, long k, long m, bool accumulate) {
    if (!accumulate) {
        for (long i = 0; i < n * m; ++i) c[i] = 0.0;
    }
    for (long i = 0; i < n; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * m;
        for (long l = 0; l < k; ++l) {
            const double av = arow[l];
            if (av == 0.0) continue;
            const double* brow = b + l * m;
            for (long j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

void mm_tn(const double* a, const double* b, double* c, long n, long k, long m, bool accumulate) {
    if (!accumulate) {
        for (long i = 0; i < n * m; ++i) c[i] = 0.0;
    }
    for (long l = 0; l < k; ++l) {
        const double* arow = a + l * n;
        const double* brow = b + l * m;
        for (long i = 0; i < n; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c + i * m;
            for (long j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

void mm_nt(const double* a, const double* b, double* c, long n, long k, long m, bool accumulate) {
    for (long i = 0; i < n; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * m;
        for (long j = 0; j < m; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (long l = 0; l < k; ++l) acc += arow[l] * brow[l];
            if (accumulate) {
                crow[j] += acc;
            } else {
                crow[j] = acc;
            }
        }
    }
}

}  // namespace kernels

}  // namespace gdbn
