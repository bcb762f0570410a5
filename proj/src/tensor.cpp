#include "plab/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <unordered_set>

namespace plab {

namespace {

std::atomic<long> g_degenerate_warnings{0};

void check_finite(const std::vector<double>& v, const char* where) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw std::domain_error(std::string("non-finite value in ") + where);
        }
    }
}

std::shared_ptr<detail::Node> make_node(int rows, int cols) {
    auto n = std::make_shared<detail::Node>();
    n->rows = rows;
    n->cols = cols;
    n->data.assign(static_cast<std::size_t>(rows) * cols, 0.0);
    return n;
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

// Wires parents / requires_grad and validates the output.
Tensor finish(std::shared_ptr<detail::Node> out, std::vector<Tensor> inputs,
              std::function<void(detail::Node&)> backprop, const char* op) {
    check_finite(out->data, op);
    bool needs = false;
    for (const Tensor& t : inputs) {
        if (t.requires_grad()) needs = true;
        out->parents.push_back(t.node());
    }
    out->requires_grad = needs;
    if (needs) out->backprop = std::move(backprop);
    return Tensor(std::move(out));
}

void accumulate(detail::Node& n, const std::vector<double>& g) {
    n.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

}  // namespace

long degenerate_warning_count() { return g_degenerate_warnings.load(); }

void warn_degenerate(const std::string& what) {
    g_degenerate_warnings.fetch_add(1);
    std::fprintf(stderr, "warning: degenerate input: %s\n", what.c_str());
}

Tensor::Tensor(int rows, int cols, bool requires_grad) {
    if (rows <= 0 || cols <= 0) throw std::invalid_argument("Tensor: non-positive extent");
    node_ = make_node(rows, cols);
    node_->requires_grad = requires_grad;
}

Tensor::Tensor(int rows, int cols, std::vector<double> data, bool requires_grad) {
    if (rows <= 0 || cols <= 0) throw std::invalid_argument("Tensor: non-positive extent");
    if (static_cast<std::size_t>(rows) * cols != data.size()) {
        throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                    " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    check_finite(data, "Tensor construction");
    node_ = make_node(rows, cols);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v) { return Tensor(1, 1, std::vector<double>{v}); }

Tensor Tensor::row(std::vector<double> v, bool requires_grad) {
    int n = static_cast<int>(v.size());
    return Tensor(1, n, std::move(v), requires_grad);
}

double Tensor::value() const {
    if (size() != 1) throw std::invalid_argument("Tensor::value: not a scalar");
    return node_->data[0];
}

const std::vector<double>* Tensor::grad() const {
    if (!node_ || node_->grad.empty()) return nullptr;
    return &node_->grad;
}

void Tensor::zero_grad() {
    if (node_) node_->grad.clear();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) shape_error("matmul", a, b);
    check_finite(a.data(), "matmul input");
    check_finite(b.data(), "matmul input");
    int n = a.rows(), k = a.cols(), m = b.cols();
    auto out = make_node(n, m);
    const auto& A = a.data();
    const auto& B = b.data();
    for (int i = 0; i < n; ++i) {
        for (int p = 0; p < k; ++p) {
            double av = A[static_cast<std::size_t>(i) * k + p];
            if (av == 0.0) continue;
            const double* brow = &B[static_cast<std::size_t>(p) * m];
            double* orow = &out->data[static_cast<std::size_t>(i) * m];
            for (int j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
    auto bp = [n, k, m](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) {
                    double g = self.grad[static_cast<std::size_t>(i) * m + j];
                    if (g == 0.0) continue;
                    for (int p = 0; p < k; ++p)
                        pa.grad[static_cast<std::size_t>(i) * k + p] += g * pb.data[static_cast<std::size_t>(p) * m + j];
                }
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int p = 0; p < k; ++p) {
                    double av = pa.data[static_cast<std::size_t>(i) * k + p];
                    if (av == 0.0) continue;
                    for (int j = 0; j < m; ++j)
                        pb.grad[static_cast<std::size_t>(p) * m + j] += av * self.grad[static_cast<std::size_t>(i) * m + j];
                }
        }
    };
    return finish(std::move(out), {a, b}, bp, "matmul");
}

namespace {

Tensor binary_samesize(const Tensor& a, const Tensor& b, const char* op,
                       double (*fwd)(double, double),
                       void (*bwd)(double, double, double, double&, double&)) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error(op, a, b);
    check_finite(a.data(), op);
    check_finite(b.data(), op);
    auto out = make_node(a.rows(), a.cols());
    for (int i = 0; i < a.size(); ++i) out->data[i] = fwd(a.data()[i], b.data()[i]);
    auto bp = [bwd](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) pa.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        double dummy = 0.0;
        for (int i = 0; i < self.size(); ++i) {
            double da = 0.0, db = 0.0;
            bwd(pa.data[i], pb.data[i], self.grad[i], da, db);
            if (pa.requires_grad) pa.grad[i] += da;
            if (pb.requires_grad) pb.grad[i] += db;
        }
        (void)dummy;
    };
    return finish(std::move(out), {a, b}, bp, op);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_samesize(a, b, "add",
        [](double x, double y) { return x + y; },
        [](double, double, double g, double& da, double& db) { da = g; db = g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_samesize(a, b, "sub",
        [](double x, double y) { return x - y; },
        [](double, double, double g, double& da, double& db) { da = g; db = -g; });
}

Tensor elementwise_mul(const Tensor& a, const Tensor& b) {
    return binary_samesize(a, b, "elementwise_mul",
        [](double x, double y) { return x * y; },
        [](double x, double y, double g, double& da, double& db) { da = g * y; db = g * x; });
}

Tensor scalar_mul(const Tensor& a, double c) {
    if (!std::isfinite(c)) throw std::domain_error("scalar_mul: non-finite factor");
    check_finite(a.data(), "scalar_mul");
    auto out = make_node(a.rows(), a.cols());
    for (int i = 0; i < a.size(); ++i) out->data[i] = c * a.data()[i];
    auto bp = [c](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int i = 0; i < self.size(); ++i) p.grad[i] += c * self.grad[i];
    };
    return finish(std::move(out), {a}, bp, "scalar_mul");
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no operands");
    int cols = parts[0].cols();
    int rows = 0;
    for (const Tensor& p : parts) {
        if (p.cols() != cols) shape_error("concat_rows", parts[0], p);
        check_finite(p.data(), "concat_rows");
        rows += p.rows();
    }
    auto out = make_node(rows, cols);
    std::size_t off = 0;
    for (const Tensor& p : parts) {
        std::copy(p.data().begin(), p.data().end(), out->data.begin() + off);
        off += p.data().size();
    }
    auto bp = [](detail::Node& self) {
        std::size_t off = 0;
        for (auto& pp : self.parents) {
            auto& p = *pp;
            if (p.requires_grad) {
                p.ensure_grad();
                for (std::size_t i = 0; i < p.data.size(); ++i) p.grad[i] += self.grad[off + i];
            }
            off += p.data.size();
        }
    };
    return finish(std::move(out), parts, bp, "concat_rows");
}

Tensor slice_rows(const Tensor& a, int begin, int end) {
    if (begin < 0 || end > a.rows() || begin >= end) {
        throw std::invalid_argument("slice_rows: bad range [" + std::to_string(begin) + ", " +
                                    std::to_string(end) + ") on " + std::to_string(a.rows()) + " rows");
    }
    check_finite(a.data(), "slice_rows");
    int cols = a.cols();
    auto out = make_node(end - begin, cols);
    std::copy(a.data().begin() + static_cast<std::size_t>(begin) * cols,
              a.data().begin() + static_cast<std::size_t>(end) * cols, out->data.begin());
    auto bp = [begin, cols](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        std::size_t off = static_cast<std::size_t>(begin) * cols;
        for (int i = 0; i < self.size(); ++i) p.grad[off + i] += self.grad[i];
    };
    return finish(std::move(out), {a}, bp, "slice_rows");
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    int n = x.rows(), d = x.cols();
    if (gain.rows() != 1 || gain.cols() != d) shape_error("layer_norm gain", x, gain);
    if (bias.rows() != 1 || bias.cols() != d) shape_error("layer_norm bias", x, bias);
    check_finite(x.data(), "layer_norm");
    check_finite(gain.data(), "layer_norm");
    check_finite(bias.data(), "layer_norm");
    auto out = make_node(n, d);
    // cache xhat and 1/std per row for the derivative rule
    auto xhat = std::make_shared<std::vector<double>>(x.data().size());
    auto inv_std = std::make_shared<std::vector<double>>(n);
    for (int i = 0; i < n; ++i) {
        const double* row = &x.data()[static_cast<std::size_t>(i) * d];
        double m = 0.0;
        for (int j = 0; j < d; ++j) m += row[j];
        m /= d;
        double v = 0.0;
        for (int j = 0; j < d; ++j) v += (row[j] - m) * (row[j] - m);
        v /= d;
        double is = 1.0 / std::sqrt(v + eps);
        (*inv_std)[i] = is;
        for (int j = 0; j < d; ++j) {
            double xh = (row[j] - m) * is;
            (*xhat)[static_cast<std::size_t>(i) * d + j] = xh;
            out->data[static_cast<std::size_t>(i) * d + j] = gain.data()[j] * xh + bias.data()[j];
        }
    }
    auto bp = [n, d, xhat, inv_std](detail::Node& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        if (pg.requires_grad) pg.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        if (px.requires_grad) px.ensure_grad();
        for (int i = 0; i < n; ++i) {
            const double* g = &self.grad[static_cast<std::size_t>(i) * d];
            const double* xh = &(*xhat)[static_cast<std::size_t>(i) * d];
            if (pg.requires_grad || pb.requires_grad) {
                for (int j = 0; j < d; ++j) {
                    if (pg.requires_grad) pg.grad[j] += g[j] * xh[j];
                    if (pb.requires_grad) pb.grad[j] += g[j];
                }
            }
            if (px.requires_grad) {
                double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                for (int j = 0; j < d; ++j) {
                    double dxh = g[j] * pg.data[j];
                    mean_dxh += dxh;
                    mean_dxh_xh += dxh * xh[j];
                }
                mean_dxh /= d;
                mean_dxh_xh /= d;
                double is = (*inv_std)[i];
                for (int j = 0; j < d; ++j) {
                    double dxh = g[j] * pg.data[j];
                    px.grad[static_cast<std::size_t>(i) * d + j] +=
                        is * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
                }
            }
        }
    };
    return finish(std::move(out), {x, gain, bias}, bp, "layer_norm");
}

Tensor gelu(const Tensor& a) {
    check_finite(a.data(), "gelu");
    auto out = make_node(a.rows(), a.cols());
    for (int i = 0; i < a.size(); ++i) {
        double x = a.data()[i];
        out->data[i] = 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
    }
    auto bp = [](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        constexpr double inv_sqrt_2pi = 0.3989422804014327;
        for (int i = 0; i < self.size(); ++i) {
            double x = p.data[i];
            double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
            double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
            p.grad[i] += self.grad[i] * (cdf + x * pdf);
        }
    };
    return finish(std::move(out), {a}, bp, "gelu");
}

Tensor softmax_rows(const Tensor& a) {
    check_finite(a.data(), "softmax_rows");
    int n = a.rows(), d = a.cols();
    auto out = make_node(n, d);
    for (int i = 0; i < n; ++i) {
        const double* row = &a.data()[static_cast<std::size_t>(i) * d];
        double mx = row[0];
        for (int j = 1; j < d; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < d; ++j) {
            double e = std::exp(row[j] - mx);
            out->data[static_cast<std::size_t>(i) * d + j] = e;
            z += e;
        }
        for (int j = 0; j < d; ++j) out->data[static_cast<std::size_t>(i) * d + j] /= z;
    }
    auto bp = [n, d](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int i = 0; i < n; ++i) {
            const double* y = &self.data[static_cast<std::size_t>(i) * d];
            const double* g = &self.grad[static_cast<std::size_t>(i) * d];
            double dot = 0.0;
            for (int j = 0; j < d; ++j) dot += y[j] * g[j];
            for (int j = 0; j < d; ++j)
                p.grad[static_cast<std::size_t>(i) * d + j] += y[j] * (g[j] - dot);
        }
    };
    return finish(std::move(out), {a}, bp, "softmax_rows");
}

Tensor log(const Tensor& a) {
    check_finite(a.data(), "log");
    auto out = make_node(a.rows(), a.cols());
    for (int i = 0; i < a.size(); ++i) {
        if (a.data()[i] <= 0.0) throw std::domain_error("log: non-positive input");
        out->data[i] = std::log(a.data()[i]);
    }
    auto bp = [](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int i = 0; i < self.size(); ++i) p.grad[i] += self.grad[i] / p.data[i];
    };
    return finish(std::move(out), {a}, bp, "log");
}

Tensor exp(const Tensor& a) {
    check_finite(a.data(), "exp");
    auto out = make_node(a.rows(), a.cols());
    for (int i = 0; i < a.size(); ++i) out->data[i] = std::exp(a.data()[i]);
    auto bp = [](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int i = 0; i < self.size(); ++i) p.grad[i] += self.grad[i] * self.data[i];
    };
    return finish(std::move(out), {a}, bp, "exp");
}

Tensor abs(const Tensor& a) {
    check_finite(a.data(), "abs");
    auto out = make_node(a.rows(), a.cols());
    for (int i = 0; i < a.size(); ++i) out->data[i] = std::abs(a.data()[i]);
    auto bp = [](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int i = 0; i < self.size(); ++i) {
            double s = p.data[i] > 0.0 ? 1.0 : (p.data[i] < 0.0 ? -1.0 : 0.0);
            p.grad[i] += self.grad[i] * s;
        }
    };
    return finish(std::move(out), {a}, bp, "abs");
}

Tensor sum(const Tensor& a) {
    check_finite(a.data(), "sum");
    auto out = make_node(1, 1);
    double s = 0.0;
    for (double v : a.data()) s += v;
    out->data[0] = s;
    auto bp = [](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (auto& g : p.grad) g += self.grad[0];
    };
    return finish(std::move(out), {a}, bp, "sum");
}

Tensor mean(const Tensor& a) {
    check_finite(a.data(), "mean");
    auto out = make_node(1, 1);
    double s = 0.0;
    for (double v : a.data()) s += v;
    out->data[0] = s / a.size();
    int n = a.size();
    auto bp = [n](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (auto& g : p.grad) g += self.grad[0] / n;
    };
    return finish(std::move(out), {a}, bp, "mean");
}

Tensor l2_normalize_rows(const Tensor& a) {
    check_finite(a.data(), "l2_normalize_rows");
    int n = a.rows(), d = a.cols();
    auto out = make_node(n, d);
    auto norms = std::make_shared<std::vector<double>>(n);
    for (int i = 0; i < n; ++i) {
        const double* row = &a.data()[static_cast<std::size_t>(i) * d];
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += row[j] * row[j];
        double norm = std::sqrt(s);
        (*norms)[i] = norm;
        if (norm == 0.0) {
            // zero row maps to itself
            warn_degenerate("l2_normalize_rows on all-zero row");
            continue;
        }
        for (int j = 0; j < d; ++j) out->data[static_cast<std::size_t>(i) * d + j] = row[j] / norm;
    }
    auto bp = [n, d, norms](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int i = 0; i < n; ++i) {
            const double* y = &self.data[static_cast<std::size_t>(i) * d];
            const double* g = &self.grad[static_cast<std::size_t>(i) * d];
            double norm = (*norms)[i];
            if (norm == 0.0) {
                for (int j = 0; j < d; ++j) p.grad[static_cast<std::size_t>(i) * d + j] += g[j];
                continue;
            }
            double dot = 0.0;
            for (int j = 0; j < d; ++j) dot += y[j] * g[j];
            for (int j = 0; j < d; ++j)
                p.grad[static_cast<std::size_t>(i) * d + j] += (g[j] - y[j] * dot) / norm;
        }
    };
    return finish(std::move(out), {a}, bp, "l2_normalize_rows");
}

Tensor transpose(const Tensor& a) {
    check_finite(a.data(), "transpose");
    int n = a.rows(), d = a.cols();
    auto out = make_node(d, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
            out->data[static_cast<std::size_t>(j) * n + i] = a.data()[static_cast<std::size_t>(i) * d + j];
    auto bp = [n, d](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j)
                p.grad[static_cast<std::size_t>(i) * d + j] += self.grad[static_cast<std::size_t>(j) * n + i];
    };
    return finish(std::move(out), {a}, bp, "transpose");
}

Tensor slice_cols(const Tensor& a, int begin, int end) {
    return transpose(slice_rows(transpose(a), begin, end));
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    std::vector<Tensor> tr;
    tr.reserve(parts.size());
    for (const Tensor& p : parts) tr.push_back(transpose(p));
    return transpose(concat_rows(tr));
}

Tensor broadcast_rows(const Tensor& rowvec, int n) {
    if (rowvec.rows() != 1) throw std::invalid_argument("broadcast_rows: expected a 1xd row");
    Tensor ones(n, 1, std::vector<double>(n, 1.0));
    return matmul(ones, rowvec);
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw std::invalid_argument("backward: loss must be a scalar");
    }
    auto root = loss.node();
    // reverse topological order over the requires_grad subgraph
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    if (root->requires_grad) {
        stack.emplace_back(root.get(), 0);
        visited.insert(root.get());
    }
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            detail::Node* parent = node->parents[idx].get();
            ++idx;
            if (parent->requires_grad && !visited.count(parent)) {
                visited.insert(parent);
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->ensure_grad();
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* node = *it;
        if (node->backprop) {
            node->ensure_grad();
            node->backprop(*node);
        }
    }
}

void sgd_step(std::vector<Tensor>& params, double learning_rate) {
    if (!(learning_rate > 0.0)) {
        throw std::invalid_argument("sgd_step: learning rate must be positive");
    }
    for (Tensor& p : params) {
        const auto* g = p.grad();
        if (!g) throw std::invalid_argument("sgd_step: parameter has no gradient");
    }
    for (Tensor& p : params) {
        const auto& g = *p.grad();
        auto& d = p.mutable_data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= learning_rate * g[i];
        check_finite(d, "sgd_step");
        p.zero_grad();
    }
}

double finite_difference_check(const std::function<Tensor()>& scalar_fn,
                               std::vector<Tensor> params, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("finite_difference_check: step must be positive");
    for (Tensor& p : params) p.zero_grad();
    Tensor loss = scalar_fn();
    if (!std::isfinite(loss.value())) throw std::domain_error("finite_difference_check: non-finite loss");
    backward(loss);
    std::vector<std::vector<double>> analytic;
    for (Tensor& p : params) {
        const auto* g = p.grad();
        analytic.push_back(g ? *g : std::vector<double>(p.data().size(), 0.0));
        p.zero_grad();
    }
    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& d = params[pi].mutable_data();
        for (std::size_t i = 0; i < d.size(); ++i) {
            double saved = d[i];
            d[i] = saved + step;
            double fp = scalar_fn().value();
            d[i] = saved - step;
            double fm = scalar_fn().value();
            d[i] = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                throw std::domain_error("finite_difference_check: non-finite evaluation");
            }
            double fd = (fp - fm) / (2.0 * step);
            double err = std::abs(analytic[pi][i] - fd) / std::max(1.0, std::abs(fd));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

std::uint64_t checksum(const std::vector<Tensor>& tensors) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](std::uint64_t v) {
        for (int b = 0; b < 8; ++b) {
            h ^= (v >> (8 * b)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    for (const Tensor& t : tensors) {
        feed(static_cast<std::uint64_t>(t.rows()) << 32 | static_cast<std::uint32_t>(t.cols()));
        for (double x : t.data()) {
            std::uint64_t bits;
            static_assert(sizeof(bits) == sizeof(x));
            std::memcpy(&bits, &x, sizeof(bits));
            feed(bits);
        }
    }
    return h;
}

}  // namespace plab
