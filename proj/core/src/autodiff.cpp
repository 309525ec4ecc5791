#include "gdbn/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace gdbn {

namespace {

void check_finite(const char* op, const Tensor& t) {
    if (!t.all_finite()) {
        throw std::runtime_error(std::string(op) + ": non-finite result");
    }
}

[[noreturn]] void shape_error(const char* op, const Tensor& a) {
    throw std::invalid_argument(std::string(op) + ": bad shape " + a.shape_str());
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                                b.shape_str());
}

}  // namespace

const Tensor& Var::value() const { return tape->value(*this); }

Tensor Tape::pooled(std::vector<long> shape) {
    size_t n = 1;
    for (long d : shape) n *= static_cast<size_t>(d);
    auto it = pool_.find(n);
    if (it != pool_.end() && !it->second.empty()) {
        std::vector<double> buf = std::move(it->second.back());
        it->second.pop_back();
        return Tensor::from(std::move(shape), std::move(buf));
    }
    return Tensor::from(std::move(shape), std::vector<double>(n));
}

Tensor Tape::pooled_zeros(std::vector<long> shape) {
    Tensor t = pooled(std::move(shape));
    t.fill(0.0);
    return t;
}

void Tape::recycle(Tensor&& t) {
    if (t.numel() == 0) return;
    std::vector<double> buf = std::move(t.storage());
    pool_[buf.size()].push_back(std::move(buf));
}

void Tape::clear() {
    for (Node& n : nodes_) {
        recycle(std::move(n.value));
        recycle(std::move(n.grad));
    }
    nodes_.clear();
}

int Tape::push(const char* op, Tensor value, std::vector<int> inputs,
               std::function<void(Tape&, int)> vjp) {
    check_finite(op, value);
    Node n;
    n.value = std::move(value);
    n.op = op;
    n.inputs = std::move(inputs);
    for (int i : n.inputs) {
        if (node(i).requires_grad) n.requires_grad = true;
    }
    if (n.requires_grad) n.vjp = std::move(vjp);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

void Tape::check_same_tape(Var v) const {
    if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
        throw std::logic_error("Var does not belong to this tape");
    }
}

Tensor& Tape::grad_buffer(int id) {
    Node& n = node(id);
    if (n.grad.numel() == 0) n.grad = pooled_zeros(n.value.shape());
    return n.grad;
}

Var Tape::leaf(const Tensor& v, bool requires_grad) {
    check_finite("leaf", v);
    Node n;
    n.value = pooled(v.shape());
    std::copy(v.data(), v.data() + v.numel(), n.value.data());
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::matmul(Var a, Var b) {
    check_same_tape(a);
    check_same_tape(b);
    const Tensor& av = node(a.id).value;
    const Tensor& bv = node(b.id).value;
    if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) shape_error("matmul", av, bv);
    const long n = av.rows(), k = av.cols(), m = bv.cols();
    Tensor out = pooled({n, m});
    kernels::mm_nn(av.data(), bv.data(), out.data(), n, k, m, false);
    int id = push("matmul", std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id, n, k, m](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        const Tensor& av2 = t.node(ia).value;
        const Tensor& bv2 = t.node(ib).value;
        if (t.node(ia).requires_grad) {
            kernels::mm_nt(g.data(), bv2.data(), t.grad_buffer(ia).data(), n, m, k, true);
        }
        if (t.node(ib).requires_grad) {
            kernels::mm_tn(av2.data(), g.data(), t.grad_buffer(ib).data(), k, n, m, true);
        }
    });
    return Var{this, id};
}

Var Tape::matmul_shared(Var a, Var b, long batch) {
    check_same_tape(a);
    check_same_tape(b);
    const Tensor& av = node(a.id).value;
    const Tensor& bv = node(b.id).value;
    if (av.rank() != 2 || bv.rank() != 2 || batch < 1 || bv.rows() != batch * av.cols()) {
        shape_error("matmul_shared", av, bv);
    }
    const long n = av.rows(), k = av.cols(), m = bv.cols();
    Tensor out = pooled({batch * n, m});
    for (long s = 0; s < batch; ++s) {
        kernels::mm_nn(av.data(), bv.data() + s * k * m, out.data() + s * n * m, n, k, m, false);
    }
    int id = push("matmul_shared", std::move(out), {a.id, b.id},
                  [ia = a.id, ib = b.id, batch, n, k, m](Tape& t, int self) {
                      const Tensor& g = t.node(self).grad;
                      const Tensor& av2 = t.node(ia).value;
                      const Tensor& bv2 = t.node(ib).value;
                      if (t.node(ia).requires_grad) {
                          double* ga = t.grad_buffer(ia).data();
                          for (long s = 0; s < batch; ++s) {
                              kernels::mm_nt(g.data() + s * n * m, bv2.data() + s * k * m, ga, n, m, k, true);
                          }
                      }
                      if (t.node(ib).requires_grad) {
                          double* gb = t.grad_buffer(ib).data();
                          for (long s = 0; s < batch; ++s) {
                              kernels::mm_tn(av2.data(), g.data() + s * n * m, gb + s * k * m, k, n, m, true);
                          }
                      }
                  });
    return Var{this, id};
}

Var Tape::add(Var a, Var b) {
    check_same_tape(a);
    check_same_tape(b);
    const Tensor& av = node(a.id).value;
    const Tensor& bv = node(b.id).value;
    const long n = av.numel();
    Tensor out = pooled(av.shape());
    if (av.same_shape(bv)) {
        for (long i = 0; i < n; ++i) out.data()[i] = av.data()[i] + bv.data()[i];
        int id = push("add", std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id, n](Tape& t, int self) {
            const double* g = t.node(self).grad.data();
            if (t.node(ia).requires_grad) {
                double* ga = t.grad_buffer(ia).data();
                for (long i = 0; i < n; ++i) ga[i] += g[i];
            }
            if (t.node(ib).requires_grad) {
                double* gb = t.grad_buffer(ib).data();
                for (long i = 0; i < n; ++i) gb[i] += g[i];
            }
        });
        return Var{this, id};
    }
    if (bv.is_scalar()) {
        const double s = bv.item();
        for (long i = 0; i < n; ++i) out.data()[i] = av.data()[i] + s;
        int id = push("add", std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id, n](Tape& t, int self) {
            const double* g = t.node(self).grad.data();
            if (t.node(ia).requires_grad) {
                double* ga = t.grad_buffer(ia).data();
                for (long i = 0; i < n; ++i) ga[i] += g[i];
            }
            if (t.node(ib).requires_grad) {
                double acc = 0.0;
                for (long i = 0; i < n; ++i) acc += g[i];
                t.grad_buffer(ib).data()[0] += acc;
            }
        });
        return Var{this, id};
    }
    if (av.rank() == 2 && bv.rank() == 2 && bv.rows() == 1 && bv.cols() == av.cols()) {
        const long rows = av.rows(), cols = av.cols();
        for (long r = 0; r < rows; ++r) {
            const double* arow = av.data() + r * cols;
            double* orow = out.data() + r * cols;
            for (long c = 0; c < cols; ++c) orow[c] = arow[c] + bv.data()[c];
        }
        int id = push("add", std::move(out), {a.id, b.id},
                      [ia = a.id, ib = b.id, rows, cols](Tape& t, int self) {
                          const double* g = t.node(self).grad.data();
                          if (t.node(ia).requires_grad) {
                              double* ga = t.grad_buffer(ia).data();
                              for (long i = 0; i < rows * cols; ++i) ga[i] += g[i];
                          }
                          if (t.node(ib).requires_grad) {
                              double* gb = t.grad_buffer(ib).data();
                              for (long r = 0; r < rows; ++r) {
                                  const double* grow = g + r * cols;
                                  for (long c = 0; c < cols; ++c) gb[c] += grow[c];
                              }
                          }
                      });
        return Var{this, id};
    }
    shape_error("add", av, bv);
}

Var Tape::sub(Var a, Var b) {
    check_same_tape(a);
    check_same_tape(b);
    const Tensor& av = node(a.id).value;
    const Tensor& bv = node(b.id).value;
    if (!av.same_shape(bv)) shape_error("sub", av, bv);
    const long n = av.numel();
    Tensor out = pooled(av.shape());
    for (long i = 0; i < n; ++i) out.data()[i] = av.data()[i] - bv.data()[i];
    int id = push("sub", std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id, n](Tape& t, int self) {
        const double* g = t.node(self).grad.data();
        if (t.node(ia).requires_grad) {
            double* ga = t.grad_buffer(ia).data();
            for (long i = 0; i < n; ++i) ga[i] += g[i];
        }
        if (t.node(ib).requires_grad) {
            double* gb = t.grad_buffer(ib).data();
            for (long i = 0; i < n; ++i) gb[i] -= g[i];
        }
    });
    return Var{this, id};
}

Var Tape::mul(Var a, Var b) {
    check_same_tape(a);
    check_same_tape(b);
    const Tensor& av = node(a.id).value;
    const Tensor& bv = node(b.id).value;
    if (!av.same_shape(bv)) shape_error("elementwise_mul", av, bv);
    const long n = av.numel();
    Tensor out = pooled(av.shape());
    for (long i = 0; i < n; ++i) out.data()[i] = av.data()[i] * bv.data()[i];
    int id = push("elementwise_mul", std::move(out), {a.id, b.id},
                  [ia = a.id, ib = b.id, n](Tape& t, int self) {
                      const double* g = t.node(self).grad.data();
                      const double* av2 = t.node(ia).value.data();
                      const double* bv2 = t.node(ib).value.data();
                      if (t.node(ia).requires_grad) {
                          double* ga = t.grad_buffer(ia).data();
                          for (long i = 0; i < n; ++i) ga[i] += g[i] * bv2[i];
                      }
                      if (t.node(ib).requires_grad) {
                          double* gb = t.grad_buffer(ib).data();
                          for (long i = 0; i < n; ++i) gb[i] += g[i] * av2[i];
                      }
                  });
    return Var{this, id};
}

Var Tape::scalar_mul(Var a, double s) {
    check_same_tape(a);
    const Tensor& av = node(a.id).value;
    const long n = av.numel();
    Tensor out = pooled(av.shape());
    for (long i = 0; i < n; ++i) out.data()[i] = av.data()[i] * s;
    int id = push("scalar_mul", std::move(out), {a.id}, [ia = a.id, s, n](Tape& t, int self) {
        if (!t.node(ia).requires_grad) return;
        const double* g = t.node(self).grad.data();
        double* ga = t.grad_buffer(ia).data();
        for (long i = 0; i < n; ++i) ga[i] += s * g[i];
    });
    return Var{this, id};
}

Var Tape::add_scalar(Var a, double s) {
    check_same_tape(a);
    const Tensor& av = node(a.id).value;
    const long n = av.numel();
    Tensor out = pooled(av.shape());
    for (long i = 0; i < n; ++i) out.data()[i] = av.data()[i] + s;
    int id = push("add_scalar", std::move(out), {a.id}, [ia = a.id, n](Tape& t, int self) {
        if (!t.node(ia).requires_grad) return;
        const double* g = t.node(self).grad.data();
        double* ga = t.grad_buffer(ia).data();
        for (long i = 0; i < n; ++i) ga[i] += g[i];
    });
    return Var{this, id};
}

Var Tape::sin_(Var a) {
    check_same_tape(a);
    const Tensor& av = node(a.id).value;
    const long n = av.numel();
    Tensor out = pooled(av.shape());
    for (long i = 0; i < n; ++i) out.data()[i] = std::sin(av.data()[i]);
    int id = push("sin", std::move(out), {a.id}, [ia = a.id, n](Tape& t, int self) {
        if (!t.node(ia).requires_grad) return;
        const double* g = t.node(self).grad.data();
        const double* x = t.node(ia).value.data();
        double* ga = t.grad_buffer(ia).data();
        for (long i = 0; i < n; ++i) ga[i] += g[i] * std::cos(x[i]);
    });
    return Var{this, id};
}

Var Tape::tanh_(Var a) {
    check_same_tape(a);
    const Tensor& av = node(a.id).value;
    const long n = av.numel();
    Tensor out = pooled(av.shape());
    for (long i = 0; i < n; ++i) out.data()[i] = std::tanh(av.data()[i]);
    int id = push("tanh", std::move(out), {a.id}, [ia = a.id, n](Tape& t, int self) {
        if (!t.node(ia).requires_grad) return;
        const double* g = t.node(self).grad.data();
        const double* y = t.node(self).value.data();
        double* ga = t.grad_buffer(ia).data();
        for (long i = 0; i < n; ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
    });
    return Var{this, id};
}

Var Tape::relu(Var a) {
    check_same_tape(a);
    const Tensor& av = node(a.id).value;
    const long n = av.numel();
    Tensor out = pooled(av.shape());
    for (long i = 0; i < n; ++i) out.data()[i] = av.data()[i] > 0.0 ? av.data()[i] : 0.0;
    int id = push("relu", std::move(out), {a.id}, [ia = a.id, n](Tape& t, int self) {
        if (!t.node(ia).requires_grad) return;
        const double* g = t.node(self).grad.data();
        const double* x = t.node(ia).value.data();
        double* ga = t.grad_buffer(ia).data();
        for (long i = 0; i < n; ++i) {
            if (x[i] > 0.0) ga[i] += g[i];
        }
    });
    return Var{this, id};
}

Var Tape::exp_(Var a) {
    check_same_tape(a);
    const Tensor& av = node(a.id).value;
    const long n = av.numel();
    Tensor out = pooled(av.shape());
    for (long i = 0; i < n; ++i) out.data()[i] = std::exp(av.data()[i]);
    int id = push("exp", std::move(out), {a.id}, [ia = a.id, n](Tape& t, int self) {
        if (!t.node(ia).requires_grad) return;
        const double* g = t.node(self).grad.data();
        const double* y = t.node(self).value.data();
        double* ga = t.grad_buffer(ia).data();
        for (long i = 0; i < n; ++i) ga[i] += g[i] * y[i];
    });
    return Var{this, id};
}

Var Tape::log_(Var a) {
    check_same_tape(a);
    const Tensor& av = node(a.id).value;
    const long n = av.numel();
    Tensor out = pooled(av.shape());
    for (long i = 0; i < n; ++i) out.data()[i] = std::log(av.data()[i]);
    int id = push("log", std::move(out), {a.id}, [ia = a.id, n](Tape& t, int self) {
        if (!t.node(ia).requires_grad) return;
        const double* g = t.node(self).grad.data();
        const double* x = t.node(ia).value.data();
        double* ga = t.grad_buffer(ia).data();
        for (long i = 0; i < n; ++i) ga[i] += g[i] / x[i];
    });
    return Var{this, id};
}

Var Tape::square(Var a) {
    check_same_tape(a);
    const Tensor& av = node(a.id).value;
    const long n = av.numel();
    Tensor out = pooled(av.shape());
    for (long i = 0; i < n; ++i) out.data()[i] = av.data()[i] * av.data()[i];
    int id = push("square", std::move(out), {a.id}, [ia = a.id, n](Tape& t, int self) {
        if (!t.node(ia).requires_grad) return;
        const double* g = t.node(self).grad.data();
        const double* x = t.node(ia).value.data();
        double* ga = t.grad_buffer(ia).data();
        for (long i = 0; i < n; ++i) ga[i] += 2.0 * x[i] * g[i];
    });
    return Var{this, id};
}

Var Tape::abs_(Var a) {
    check_same_tape(a);
    const Tensor& av = node(a.id).value;
    const long n = av.numel();
    Tensor out = pooled(av.shape());
    for (long i = 0; i < n; ++i) out.data()[i] = std::abs(av.data()[i]);
    // Subgradient 0 at exactly-zero entries.
    int id = push("abs", std::move(out), {a.id}, [ia = a.id, n](Tape& t, int self) {
        if (!t.node(ia).requires_grad) return;
        const double* g = t.node(self).grad.data();
        const double* x = t.node(ia).value.data();
        double* ga = t.grad_buffer(ia).data();
        for (long i = 0; i < n; ++i) {
            if (x[i] > 0.0) {
                ga[i] += g[i];
            } else if (x[i] < 0.0) {
                ga[i] -= g[i];
            }
        }
    });
    return Var{this, id};
}

Var Tape::clamp(Var a, double lo, double hi) {
    check_same_tape(a);
    if (!(lo <= hi)) throw std::invalid_argument("clamp: lo > hi");
    const Tensor& av = node(a.id).value;
    const long n = av.numel();
    Tensor out = pooled(av.shape());
    for (long i = 0; i < n; ++i) out.data()[i] = std::min(hi, std::max(lo, av.data()[i]));
    int id = push("clamp", std::move(out), {a.id}, [ia = a.id, lo, hi, n](Tape& t, int self) {
        if (!t.node(ia).requires_grad) return;
        const double* g = t.node(self).grad.data();
        const double* x = t.node(ia).value.data();
        double* ga = t.grad_buffer(ia).data();
        for (long i = 0; i < n; ++i) {
            if (x[i] >= lo && x[i] <= hi) ga[i] += g[i];
        }
    });
    return Var{this, id};
}

Var Tape::sum(Var a) {
    check_same_tape(a);
    const Tensor& av = node(a.id).value;
    const long n = av.numel();
    double acc = 0.0;
    for (long i = 0; i < n; ++i) acc += av.data()[i];
    int id = push("sum", Tensor::scalar(acc), {a.id}, [ia = a.id, n](Tape& t, int self) {
        if (!t.node(ia).requires_grad) return;
        const double g = t.node(self).grad.item();
        double* ga = t.grad_buffer(ia).data();
        for (long i = 0; i < n; ++i) ga[i] += g;
    });
    return Var{this, id};
}

Var Tape::mean(Var a) {
    check_same_tape(a);
    const Tensor& av = node(a.id).value;
    const long n = av.numel();
    if (n == 0) shape_error("mean", av);
    double acc = 0.0;
    for (long i = 0; i < n; ++i) acc += av.data()[i];
    int id = push("mean", Tensor::scalar(acc / static_cast<double>(n)), {a.id},
                  [ia = a.id, n](Tape& t, int self) {
                      if (!t.node(ia).requires_grad) return;
                      const double g = t.node(self).grad.item() / static_cast<double>(n);
                      double* ga = t.grad_buffer(ia).data();
                      for (long i = 0; i < n; ++i) ga[i] += g;
                  });
    return Var{this, id};
}

Var Tape::reshape(Var a, std::vector<long> shape) {
    check_same_tape(a);
    const Tensor& av = node(a.id).value;
    long n = 1;
    for (long d : shape) n *= d;
    if (n != av.numel()) {
        throw std::invalid_argument("reshape: cannot view " + av.shape_str() + " with " +
                                    std::to_string(av.numel()) + " elements as the requested shape");
    }
    Tensor out = pooled(std::move(shape));
    std::copy(av.data(), av.data() + av.numel(), out.data());
    int id = push("reshape", std::move(out), {a.id}, [ia = a.id, n](Tape& t, int self) {
        if (!t.node(ia).requires_grad) return;
        const double* g = t.node(self).grad.data();
        double* ga = t.grad_buffer(ia).data();
        for (long i = 0; i < n; ++i) ga[i] += g[i];
    });
    return Var{this, id};
}

Var Tape::concat_cols(Var a, Var b) {
    check_same_tape(a);
    check_same_tape(b);
    const Tensor& av = node(a.id).value;
    const Tensor& bv = node(b.id).value;
    if (av.rank() != 2 || bv.rank() != 2 || av.rows() != bv.rows()) {
        shape_error("concat_last_dim", av, bv);
    }
    const long rows = av.rows(), ca = av.cols(), cb = bv.cols();
    Tensor out = pooled({rows, ca + cb});
    for (long r = 0; r < rows; ++r) {
        std::copy(av.data() + r * ca, av.data() + (r + 1) * ca, out.data() + r * (ca + cb));
        std::copy(bv.data() + r * cb, bv.data() + (r + 1) * cb, out.data() + r * (ca + cb) + ca);
    }
    int id = push("concat_last_dim", std::move(out), {a.id, b.id},
                  [ia = a.id, ib = b.id, rows, ca, cb](Tape& t, int self) {
                      const double* g = t.node(self).grad.data();
                      if (t.node(ia).requires_grad) {
                          double* ga = t.grad_buffer(ia).data();
                          for (long r = 0; r < rows; ++r) {
                              const double* grow = g + r * (ca + cb);
                              for (long c = 0; c < ca; ++c) ga[r * ca + c] += grow[c];
                          }
                      }
                      if (t.node(ib).requires_grad) {
                          double* gb = t.grad_buffer(ib).data();
                          for (long r = 0; r < rows; ++r) {
                              const double* grow = g + r * (ca + cb) + ca;
                              for (long c = 0; c < cb; ++c) gb[r * cb + c] += grow[c];
                          }
                      }
                  });
    return Var{this, id};
}

Var Tape::slice_cols(Var a, long start, long len) {
    check_same_tape(a);
    const Tensor& av = node(a.id).value;
    if (av.rank() != 2 || start < 0 || len < 1 || start + len > av.cols()) shape_error("slice", av);
    const long rows = av.rows(), cols = av.cols();
    Tensor out = pooled({rows, len});
    for (long r = 0; r < rows; ++r) {
        std::copy(av.data() + r * cols + start, av.data() + r * cols + start + len, out.data() + r * len);
    }
    int id = push("slice", std::move(out), {a.id}, [ia = a.id, rows, cols, start, len](Tape& t, int self) {
        if (!t.node(ia).requires_grad) return;
        const double* g = t.node(self).grad.data();
        double* ga = t.grad_buffer(ia).data();
        for (long r = 0; r < rows; ++r) {
            for (long c = 0; c < len; ++c) ga[r * cols + start + c] += g[r * len + c];
        }
    });
    return Var{this, id};
}

Var Tape::slice_rows(Var a, long start, long len) {
    check_same_tape(a);
    const Tensor& av = node(a.id).value;
    if (av.rank() != 2 || start < 0 || len < 1 || start + len > av.rows()) shape_error("slice", av);
    const long cols = av.cols();
    Tensor out = pooled({len, cols});
    std::copy(av.data() + start * cols, av.data() + (start + len) * cols, out.data());
    int id = push("slice", std::move(out), {a.id}, [ia = a.id, cols, start, len](Tape& t, int self) {
        if (!t.node(ia).requires_grad) return;
        const double* g = t.node(self).grad.data();
        double* ga = t.grad_buffer(ia).data();
        for (long i = 0; i < len * cols; ++i) ga[start * cols + i] += g[i];
    });
    return Var{this, id};
}

Var Tape::broadcast_rows(Var a, long nrows) {
    check_same_tape(a);
    const Tensor& av = node(a.id).value;
    if (av.rank() != 2 || av.rows() != 1 || nrows < 1) shape_error("broadcast", av);
    const long cols = av.cols();
    Tensor out = pooled({nrows, cols});
    for (long r = 0; r < nrows; ++r) {
        std::copy(av.data(), av.data() + cols, out.data() + r * cols);
    }
    int id = push("broadcast", std::move(out), {a.id}, [ia = a.id, nrows, cols](Tape& t, int self) {
        if (!t.node(ia).requires_grad) return;
        const double* g = t.node(self).grad.data();
        double* ga = t.grad_buffer(ia).data();
        for (long r = 0; r < nrows; ++r) {
            for (long c = 0; c < cols; ++c) ga[c] += g[r * cols + c];
        }
    });
    return Var{this, id};
}

Var Tape::repeat_rows(Var a, long inner, long outer) {
    check_same_tape(a);
    const Tensor& av = node(a.id).value;
    if (av.rank() != 2 || inner < 1 || outer < 1) shape_error("repeat_rows", av);
    const long r0 = av.rows(), cols = av.cols();
    Tensor out = pooled({outer * r0 * inner, cols});
    for (long o = 0; o < outer; ++o) {
        for (long r = 0; r < r0; ++r) {
            const double* src = av.data() + r * cols;
            for (long t = 0; t < inner; ++t) {
                std::copy(src, src + cols, out.data() + (((o * r0) + r) * inner + t) * cols);
            }
        }
    }
    int id = push("repeat_rows", std::move(out), {a.id},
                  [ia = a.id, r0, cols, inner, outer](Tape& t, int self) {
                      if (!t.node(ia).requires_grad) return;
                      const double* g = t.node(self).grad.data();
                      double* ga = t.grad_buffer(ia).data();
                      for (long o = 0; o < outer; ++o) {
                          for (long r = 0; r < r0; ++r) {
                              double* dst = ga + r * cols;
                              for (long k = 0; k < inner; ++k) {
                                  const double* grow = g + (((o * r0) + r) * inner + k) * cols;
                                  for (long c = 0; c < cols; ++c) dst[c] += grow[c];
                              }
                          }
                      }
                  });
    return Var{this, id};
}

Var Tape::stack_interleaved(std::span<const Var> slices, long block) {
    if (slices.empty()) throw std::invalid_argument("stack_interleaved: no slices");
    const long L = static_cast<long>(slices.size());
    std::vector<int> ids;
    ids.reserve(slices.size());
    for (Var s : slices) {
        check_same_tape(s);
        ids.push_back(s.id);
        if (!node(s.id).value.same_shape(node(slices[0].id).value)) {
            shape_error("stack_interleaved", node(s.id).value, node(slices[0].id).value);
        }
    }
    const Tensor& first = node(ids[0]).value;
    if (first.rank() != 2 || block < 1 || first.rows() % block != 0) shape_error("stack_interleaved", first);
    const long B = first.rows() / block, cols = first.cols();
    Tensor out = pooled({B * L * block, cols});
    for (long b = 0; b < B; ++b) {
        for (long l = 0; l < L; ++l) {
            const double* src = node(ids[l]).value.data() + b * block * cols;
            double* dst = out.data() + ((b * L) + l) * block * cols;
            std::copy(src, src + block * cols, dst);
        }
    }
    int id = push("stack_interleaved", std::move(out), ids,
                  [ids, B, L, block, cols](Tape& t, int self) {
                      const double* g = t.node(self).grad.data();
                      for (long l = 0; l < L; ++l) {
                          if (!t.node(ids[l]).requires_grad) continue;
                          double* gl = t.grad_buffer(ids[l]).data();
                          for (long b = 0; b < B; ++b) {
                              const double* grow = g + ((b * L) + l) * block * cols;
                              double* dst = gl + b * block * cols;
                              for (long i = 0; i < block * cols; ++i) dst[i] += grow[i];
                          }
                      }
                  });
    return Var{this, id};
}

void Tape::backward(Var root) {
    check_same_tape(root);
    if (node(root.id).value.numel() != 1) {
        throw std::invalid_argument("backward: root must be scalar, got " + node(root.id).value.shape_str());
    }
    if (!node(root.id).requires_grad) return;  // nothing depends on any parameter

    // Mark the subgraph that actually feeds the root.
    std::vector<char> reachable(nodes_.size(), 0);
    std::vector<int> stack{root.id};
    reachable[static_cast<size_t>(root.id)] = 1;
    while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        for (int in : node(cur).inputs) {
            if (!reachable[static_cast<size_t>(in)] && node(in).requires_grad) {
                reachable[static_cast<size_t>(in)] = 1;
                stack.push_back(in);
            }
        }
    }

    grad_buffer(root.id).data()[0] = 1.0;
    for (int i = root.id; i >= 0; --i) {
        if (!reachable[static_cast<size_t>(i)]) continue;
        Node& n = node(i);
        if (!n.vjp) continue;
        grad_buffer(i);  // ensure allocated even if no consumer touched it
        n.vjp(*this, i);
    }
}

Tensor Tape::grad(Var v) const {
    check_same_tape(v);
    const Node& n = node(v.id);
    if (n.grad.numel() == 0) return Tensor::zeros(n.value.shape());
    return n.grad;
}

FdReport finite_difference_check(FdProblem& problem, double step) {
    FdReport report;

    // AD gradients at the current parameter values.
    std::vector<Tensor> ad_grads;
    {
        Tape tape;
        std::vector<Var> leaves;
        leaves.reserve(problem.params.size());
        for (auto& [name, ptr] : problem.params) leaves.push_back(tape.leaf(*ptr, true));
        Var root = problem.build(tape, leaves);
        tape.backward(root);
        for (Var l : leaves) ad_grads.push_back(tape.grad(l));
    }

    Tape scratch;
    auto eval = [&]() {
        scratch.clear();
        std::vector<Var> leaves;
        leaves.reserve(problem.params.size());
        for (auto& [name, ptr] : problem.params) leaves.push_back(scratch.leaf(*ptr, false));
        Var root = problem.build(scratch, leaves);
        return scratch.value(root).item();
    };

    for (size_t p = 0; p < problem.params.size(); ++p) {
        Tensor* param = problem.params[p].second;
        for (long e = 0; e < param->numel(); ++e) {
            const double saved = param->data()[e];
            param->data()[e] = saved + step;
            const double f_plus = eval();
            param->data()[e] = saved - step;
            const double f_minus = eval();
            param->data()[e] = saved;

            const double fd = (f_plus - f_minus) / (2.0 * step);
            const double ad = ad_grads[p].data()[e];
            const double abs_err = std::abs(ad - fd);
            const double scale = std::max(std::abs(ad), std::abs(fd));
            const double rel = scale >= 1e-6 ? abs_err / scale : 0.0;
            report.max_abs_error = std::max(report.max_abs_error, abs_err);
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = problem.params[p].first + "[" + std::to_string(e) + "]";
            }
            ++report.elements_checked;
        }
    }
    return report;
}

}  // namespace gdbn
