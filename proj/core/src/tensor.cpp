#include "eigenformer/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace eigenformer {

namespace {

size_t numel_of(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    return n;
}

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
    throw std::invalid_argument(std::string(op) + ": " + detail);
}

std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

void require_2d(const char* op, const Tensor& t) {
    if (t.ndim() != 2) shape_error(op, "expected 2-d tensor, got " + shape_str(t.shape));
}

thread_local bool g_grad_enabled = true;

bool track(const Tensor& t) { return g_grad_enabled && t.requires_grad; }

/// Attach a tape node to `out`. The closure receives the output cotangent and
/// must accumulate into parents' grad buffers (skipping non-tracked parents).
void record(Tensor& out, const char* op, std::vector<Tensor> parents,
            std::function<void(const std::vector<double>&)> backward) {
    out.requires_grad = true;
    out.ensure_grad();
    out.node = std::make_shared<TapeNode>();
    out.node->op = op;
    out.node->parents = std::move(parents);
    out.node->out_grad = out.grad;
    out.node->backward = std::move(backward);
}

void accumulate(Tensor& t, size_t idx, double v) { (*t.grad)[idx] += v; }

} // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    Tensor t;
    t.shape = std::move(shape);
    t.values = std::make_shared<std::vector<double>>(numel_of(t.shape), 0.0);
    t.requires_grad = requires_grad;
    if (requires_grad) t.ensure_grad();
    return t;
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.values->begin(), t.values->end(), value);
    return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    if (numel_of(shape) != data.size())
        shape_error("Tensor::from", "shape " + shape_str(shape) + " expects " +
                                        std::to_string(numel_of(shape)) + " values, got " +
                                        std::to_string(data.size()));
    Tensor t;
    t.shape = std::move(shape);
    t.values = std::make_shared<std::vector<double>>(std::move(data));
    t.requires_grad = requires_grad;
    if (requires_grad) t.ensure_grad();
    return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({1}, {v}, requires_grad); }

Tensor Tensor::uniform(std::vector<int> shape, double lo, double hi, std::mt19937_64& rng,
                       bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : *t.values) v = dist(rng);
    return t;
}

size_t Tensor::numel() const { return values ? values->size() : 0; }

double Tensor::item() const {
    if (!is_scalar()) shape_error("item", "tensor of shape " + shape_str(shape) + " is not scalar");
    return (*values)[0];
}

void Tensor::ensure_grad() {
    if (!grad) grad = std::make_shared<std::vector<double>>(numel(), 0.0);
}

void Tensor::zero_grad() {
    if (grad) std::fill(grad->begin(), grad->end(), 0.0);
}

const std::vector<double>& Tensor::grad_ref() const {
    static const std::vector<double> empty;
    return grad ? *grad : empty;
}

Tensor Tensor::detached_copy() const {
    Tensor t;
    t.shape = shape;
    t.values = std::make_shared<std::vector<double>>(*values);
    return t;
}

// ---- tape -------------------------------------------------------------------

Tape Tape::from(const Tensor& loss) {
    if (!loss.requires_grad || !loss.node)
        throw std::runtime_error("backward: loss is detached (no recorded operations)");
    if (!loss.node->backward)
        throw std::runtime_error("backward: tape already consumed");
    if (!loss.is_scalar())
        throw std::runtime_error("backward: loss must be scalar, got shape " +
                                 shape_str(loss.shape));

    Tape tape;
    tape.root_ = loss;

    // Iterative post-order DFS so parents land before consumers.
    std::unordered_set<TapeNode*> visited;
    std::vector<std::pair<std::shared_ptr<TapeNode>, size_t>> stack;
    stack.emplace_back(loss.node, 0);
    visited.insert(loss.node.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            const std::shared_ptr<TapeNode>& child = node->parents[idx].node;
            ++idx;
            if (child && !visited.count(child.get())) {
                visited.insert(child.get());
                stack.emplace_back(child, 0);
            }
        } else {
            tape.order_.push_back(node);
            stack.pop_back();
        }
    }
    return tape;
}

void Tape::run() {
    (*root_.grad)[0] = 1.0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        TapeNode* node = it->get();
        if (node->backward) node->backward(*node->out_grad);
    }
    for (auto& n : order_) {
        n->backward = nullptr;
        n->parents.clear();
    }
}

void backward(Tensor& loss) {
    Tape tape = Tape::from(loss);
    tape.run();
}

// ---- primitives --------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d("matmul", a);
    require_2d("matmul", b);
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        shape_error("matmul", "inner dimensions differ: " + shape_str(a.shape) + " x " +
                                  shape_str(b.shape));
    Tensor out = Tensor::zeros({m, n});
    const double* A = a.data();
    const double* B = b.data();
    double* C = out.data();
    for (int i = 0; i < m; ++i)
        for (int l = 0; l < k; ++l) {
            const double av = A[static_cast<size_t>(i) * k + l];
            if (av == 0.0) continue;
            const double* brow = B + static_cast<size_t>(l) * n;
            double* crow = C + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }

    if (track(a) || track(b)) {
        Tensor pa = a, pb = b;
        record(out, "matmul", {a, b}, [pa, pb, m, k, n](const std::vector<double>& g) mutable {
            // dA = g . B^T ; dB = A^T . g
            if (pa.requires_grad) {
                pa.ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int l = 0; l < k; ++l) {
                        double s = 0.0;
                        for (int j = 0; j < n; ++j)
                            s += g[static_cast<size_t>(i) * n + j] *
                                 (*pb.values)[static_cast<size_t>(l) * n + j];
                        accumulate(pa, static_cast<size_t>(i) * k + l, s);
                    }
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (int l = 0; l < k; ++l)
                    for (int j = 0; j < n; ++j) {
                        double s = 0.0;
                        for (int i = 0; i < m; ++i)
                            s += (*pa.values)[static_cast<size_t>(i) * k + l] *
                                 g[static_cast<size_t>(i) * n + j];
                        accumulate(pb, static_cast<size_t>(l) * n + j, s);
                    }
            }
        });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape)
        shape_error("add", "shapes differ: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    Tensor out = Tensor::zeros(a.shape);
    const size_t n = out.numel();
    for (size_t i = 0; i < n; ++i) (*out.values)[i] = (*a.values)[i] + (*b.values)[i];

    if (track(a) || track(b)) {
        Tensor pa = a, pb = b;
        record(out, "add", {a, b}, [pa, pb, n](const std::vector<double>& g) mutable {
            if (pa.requires_grad) {
                pa.ensure_grad();
                for (size_t i = 0; i < n; ++i) accumulate(pa, i, g[i]);
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (size_t i = 0; i < n; ++i) accumulate(pb, i, g[i]);
            }
        });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape)
        shape_error("mul", "shapes differ: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    Tensor out = Tensor::zeros(a.shape);
    const size_t n = out.numel();
    for (size_t i = 0; i < n; ++i) (*out.values)[i] = (*a.values)[i] * (*b.values)[i];

    if (track(a) || track(b)) {
        Tensor pa = a, pb = b;
        record(out, "mul", {a, b}, [pa, pb, n](const std::vector<double>& g) mutable {
            if (pa.requires_grad) {
                pa.ensure_grad();
                for (size_t i = 0; i < n; ++i) accumulate(pa, i, g[i] * (*pb.values)[i]);
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (size_t i = 0; i < n; ++i) accumulate(pb, i, g[i] * (*pa.values)[i]);
            }
        });
    }
    return out;
}

Tensor add_rowvec(const Tensor& x, const Tensor& b) {
    require_2d("add_rowvec", x);
    const int m = x.dim(0), n = x.dim(1);
    if (b.ndim() != 1 || b.dim(0) != n)
        shape_error("add_rowvec", "bias shape " + shape_str(b.shape) + " does not match " +
                                      shape_str(x.shape));
    Tensor out = Tensor::zeros(x.shape);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            (*out.values)[static_cast<size_t>(i) * n + j] =
                (*x.values)[static_cast<size_t>(i) * n + j] + (*b.values)[j];

    if (track(x) || track(b)) {
        Tensor px = x, pb = b;
        record(out, "add_rowvec", {x, b}, [px, pb, m, n](const std::vector<double>& g) mutable {
            if (px.requires_grad) {
                px.ensure_grad();
                for (size_t i = 0; i < static_cast<size_t>(m) * n; ++i) accumulate(px, i, g[i]);
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j)
                        accumulate(pb, j, g[static_cast<size_t>(i) * n + j]);
            }
        });
    }
    return out;
}

Tensor mul_rowvec(const Tensor& x, const Tensor& v) {
    require_2d("mul_rowvec", x);
    const int m = x.dim(0), n = x.dim(1);
    if (v.ndim() != 1 || v.dim(0) != n)
        shape_error("mul_rowvec", "vector shape " + shape_str(v.shape) + " does not match " +
                                      shape_str(x.shape));
    Tensor out = Tensor::zeros(x.shape);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            (*out.values)[static_cast<size_t>(i) * n + j] =
                (*x.values)[static_cast<size_t>(i) * n + j] * (*v.values)[j];

    if (track(x) || track(v)) {
        Tensor px = x, pv = v;
        record(out, "mul_rowvec", {x, v}, [px, pv, m, n](const std::vector<double>& g) mutable {
            if (px.requires_grad) {
                px.ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j)
                        accumulate(px, static_cast<size_t>(i) * n + j,
                                   g[static_cast<size_t>(i) * n + j] * (*pv.values)[j]);
            }
            if (pv.requires_grad) {
                pv.ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j)
                        accumulate(pv, j, g[static_cast<size_t>(i) * n + j] *
                                              (*px.values)[static_cast<size_t>(i) * n + j]);
            }
        });
    }
    return out;
}

Tensor mul_colvec(const Tensor& x, const Tensor& c) {
    require_2d("mul_colvec", x);
    const int m = x.dim(0), n = x.dim(1);
    if (c.ndim() != 1 || c.dim(0) != m)
        shape_error("mul_colvec", "vector shape " + shape_str(c.shape) + " does not match " +
                                      shape_str(x.shape));
    Tensor out = Tensor::zeros(x.shape);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            (*out.values)[static_cast<size_t>(i) * n + j] =
                (*x.values)[static_cast<size_t>(i) * n + j] * (*c.values)[i];

    if (track(x) || track(c)) {
        Tensor px = x, pc = c;
        record(out, "mul_colvec", {x, c}, [px, pc, m, n](const std::vector<double>& g) mutable {
            if (px.requires_grad) {
                px.ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j)
                        accumulate(px, static_cast<size_t>(i) * n + j,
                                   g[static_cast<size_t>(i) * n + j] * (*pc.values)[i]);
            }
            if (pc.requires_grad) {
                pc.ensure_grad();
                for (int i = 0; i < m; ++i) {
                    double s = 0.0;
                    for (int j = 0; j < n; ++j)
                        s += g[static_cast<size_t>(i) * n + j] *
                             (*px.values)[static_cast<size_t>(i) * n + j];
                    accumulate(pc, i, s);
                }
            }
        });
    }
    return out;
}

Tensor scale(const Tensor& x, double c) {
    Tensor out = Tensor::zeros(x.shape);
    const size_t n = out.numel();
    for (size_t i = 0; i < n; ++i) (*out.values)[i] = (*x.values)[i] * c;

    if (track(x)) {
        Tensor px = x;
        record(out, "scale", {x}, [px, c, n](const std::vector<double>& g) mutable {
            px.ensure_grad();
            for (size_t i = 0; i < n; ++i) accumulate(px, i, g[i] * c);
        });
    }
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) shape_error("concat_cols", "no inputs");
    const int m = parts[0].dim(0);
    int total = 0;
    for (const Tensor& p : parts) {
        require_2d("concat_cols", p);
        if (p.dim(0) != m)
            shape_error("concat_cols", "row counts differ: " + shape_str(parts[0].shape) +
                                           " vs " + shape_str(p.shape));
        total += p.dim(1);
    }
    Tensor out = Tensor::zeros({m, total});
    int off = 0;
    for (const Tensor& p : parts) {
        const int w = p.dim(1);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j)
                (*out.values)[static_cast<size_t>(i) * total + off + j] =
                    (*p.values)[static_cast<size_t>(i) * w + j];
        off += w;
    }

    bool any = false;
    for (const Tensor& p : parts) any = any || track(p);
    if (any) {
        std::vector<Tensor> ps = parts;
        record(out, "concat_cols", parts, [ps, m, total](const std::vector<double>& g) mutable {
            int off2 = 0;
            for (Tensor& p : ps) {
                const int w = p.dim(1);
                if (p.requires_grad) {
                    p.ensure_grad();
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < w; ++j)
                            accumulate(p, static_cast<size_t>(i) * w + j,
                                       g[static_cast<size_t>(i) * total + off2 + j]);
                }
                off2 += w;
            }
        });
    }
    return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) shape_error("concat_rows", "no inputs");
    const int n = parts[0].dim(parts[0].ndim() - 1);
    int total = 0;
    for (const Tensor& p : parts) {
        require_2d("concat_rows", p);
        if (p.dim(1) != n)
            shape_error("concat_rows", "column counts differ: " + shape_str(parts[0].shape) +
                                           " vs " + shape_str(p.shape));
        total += p.dim(0);
    }
    Tensor out = Tensor::zeros({total, n});
    size_t off = 0;
    for (const Tensor& p : parts) {
        std::copy(p.values->begin(), p.values->end(), out.values->begin() + off);
        off += p.numel();
    }

    bool any = false;
    for (const Tensor& p : parts) any = any || track(p);
    if (any) {
        std::vector<Tensor> ps = parts;
        record(out, "concat_rows", parts, [ps](const std::vector<double>& g) mutable {
            size_t off2 = 0;
            for (Tensor& p : ps) {
                const size_t cnt = p.numel();
                if (p.requires_grad) {
                    p.ensure_grad();
                    for (size_t i = 0; i < cnt; ++i) accumulate(p, i, g[off2 + i]);
                }
                off2 += cnt;
            }
        });
    }
    return out;
}

Tensor slice_rows(const Tensor& x, int begin, int end) {
    require_2d("slice_rows", x);
    const int m = x.dim(0), n = x.dim(1);
    if (begin < 0 || end > m || begin >= end)
        shape_error("slice_rows", "range [" + std::to_string(begin) + "," + std::to_string(end) +
                                      ") invalid for " + shape_str(x.shape));
    const int rows = end - begin;
    Tensor out = Tensor::zeros({rows, n});
    std::copy(x.values->begin() + static_cast<size_t>(begin) * n,
              x.values->begin() + static_cast<size_t>(end) * n, out.values->begin());

    if (track(x)) {
        Tensor px = x;
        record(out, "slice_rows", {x}, [px, begin, rows, n](const std::vector<double>& g) mutable {
            px.ensure_grad();
            for (size_t i = 0; i < static_cast<size_t>(rows) * n; ++i)
                accumulate(px, static_cast<size_t>(begin) * n + i, g[i]);
        });
    }
    return out;
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
    if (numel_of(shape) != x.numel())
        shape_error("reshape", "cannot view " + shape_str(x.shape) + " as " + shape_str(shape));
    Tensor out = Tensor::zeros(shape);
    std::copy(x.values->begin(), x.values->end(), out.values->begin());

    if (track(x)) {
        Tensor px = x;
        const size_t n = x.numel();
        record(out, "reshape", {x}, [px, n](const std::vector<double>& g) mutable {
            px.ensure_grad();
            for (size_t i = 0; i < n; ++i) accumulate(px, i, g[i]);
        });
    }
    return out;
}

Tensor transpose(const Tensor& x) {
    require_2d("transpose", x);
    const int m = x.dim(0), n = x.dim(1);
    Tensor out = Tensor::zeros({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            (*out.values)[static_cast<size_t>(j) * m + i] = (*x.values)[static_cast<size_t>(i) * n + j];

    if (track(x)) {
        Tensor px = x;
        record(out, "transpose", {x}, [px, m, n](const std::vector<double>& g) mutable {
            px.ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    accumulate(px, static_cast<size_t>(i) * n + j, g[static_cast<size_t>(j) * m + i]);
        });
    }
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape);
    const size_t n = out.numel();
    for (size_t i = 0; i < n; ++i) (*out.values)[i] = std::max(0.0, (*x.values)[i]);

    if (track(x)) {
        Tensor px = x;
        record(out, "relu", {x}, [px, n](const std::vector<double>& g) mutable {
            px.ensure_grad();
            for (size_t i = 0; i < n; ++i)
                if ((*px.values)[i] > 0.0) accumulate(px, i, g[i]);
        });
    }
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    require_2d("softmax_rows", x);
    const int m = x.dim(0), n = x.dim(1);
    Tensor out = Tensor::zeros(x.shape);
    for (int i = 0; i < m; ++i) {
        const double* row = x.data() + static_cast<size_t>(i) * n;
        double* orow = out.data() + static_cast<size_t>(i) * n;
        double mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            orow[j] = std::exp(row[j] - mx);
            sum += orow[j];
        }
        for (int j = 0; j < n; ++j) orow[j] /= sum;
    }

    if (track(x)) {
        Tensor px = x;
        auto y = out.values; // saved forward output
        record(out, "softmax_rows", {x}, [px, y, m, n](const std::vector<double>& g) mutable {
            px.ensure_grad();
            for (int i = 0; i < m; ++i) {
                const double* yrow = y->data() + static_cast<size_t>(i) * n;
                const double* grow = g.data() + static_cast<size_t>(i) * n;
                double dot = 0.0;
                for (int j = 0; j < n; ++j) dot += grow[j] * yrow[j];
                for (int j = 0; j < n; ++j)
                    accumulate(px, static_cast<size_t>(i) * n + j, yrow[j] * (grow[j] - dot));
            }
        });
    }
    return out;
}

Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (double v : *x.values) s += v;
    Tensor out = Tensor::scalar(s);

    if (track(x)) {
        Tensor px = x;
        const size_t n = x.numel();
        record(out, "sum_all", {x}, [px, n](const std::vector<double>& g) mutable {
            px.ensure_grad();
            for (size_t i = 0; i < n; ++i) accumulate(px, i, g[0]);
        });
    }
    return out;
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng, bool train) {
    if (rate < 0.0 || rate >= 1.0)
        shape_error("dropout", "rate must be in [0,1), got " + std::to_string(rate));
    if (!train || rate == 0.0) return x;

    const size_t n = x.numel();
    const double keep_scale = 1.0 / (1.0 - rate);
    auto mask = std::make_shared<std::vector<double>>(n);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (size_t i = 0; i < n; ++i) (*mask)[i] = (dist(rng) >= rate) ? keep_scale : 0.0;

    Tensor out = Tensor::zeros(x.shape);
    for (size_t i = 0; i < n; ++i) (*out.values)[i] = (*x.values)[i] * (*mask)[i];

    if (track(x)) {
        Tensor px = x;
        record(out, "dropout", {x}, [px, mask, n](const std::vector<double>& g) mutable {
            px.ensure_grad();
            for (size_t i = 0; i < n; ++i) accumulate(px, i, g[i] * (*mask)[i]);
        });
    }
    return out;
}

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                 bool train) {
    require_2d("batchnorm", x);
    const int m = x.dim(0), n = x.dim(1);
    if (gamma.ndim() != 1 || gamma.dim(0) != n || beta.ndim() != 1 || beta.dim(0) != n)
        shape_error("batchnorm", "affine shapes " + shape_str(gamma.shape) + "/" +
                                     shape_str(beta.shape) + " do not match " + shape_str(x.shape));
    if (static_cast<int>(state.running_mean.size()) != n)
        shape_error("batchnorm", "state tracks " + std::to_string(state.running_mean.size()) +
                                     " features, input has " + std::to_string(n));

    auto mean = std::make_shared<std::vector<double>>(n, 0.0);
    auto inv_std = std::make_shared<std::vector<double>>(n, 0.0);
    if (train) {
        for (int j = 0; j < n; ++j) {
            double mu = 0.0;
            for (int i = 0; i < m; ++i) mu += (*x.values)[static_cast<size_t>(i) * n + j];
            mu /= m;
            double var = 0.0;
            for (int i = 0; i < m; ++i) {
                const double d = (*x.values)[static_cast<size_t>(i) * n + j] - mu;
                var += d * d;
            }
            var /= m; // biased
            (*mean)[j] = mu;
            (*inv_std)[j] = 1.0 / std::sqrt(var + state.eps);
            state.running_mean[j] = (1.0 - state.momentum) * state.running_mean[j] + state.momentum * mu;
            state.running_var[j] = (1.0 - state.momentum) * state.running_var[j] + state.momentum * var;
        }
    } else {
        for (int j = 0; j < n; ++j) {
            (*mean)[j] = state.running_mean[j];
            (*inv_std)[j] = 1.0 / std::sqrt(state.running_var[j] + state.eps);
        }
    }

    auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(m) * n);
    Tensor out = Tensor::zeros(x.shape);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            const size_t idx = static_cast<size_t>(i) * n + j;
            (*xhat)[idx] = ((*x.values)[idx] - (*mean)[j]) * (*inv_std)[j];
            (*out.values)[idx] = (*gamma.values)[j] * (*xhat)[idx] + (*beta.values)[j];
        }

    if (track(x) || track(gamma) || track(beta)) {
        Tensor px = x, pg = gamma, pb = beta;
        record(out, "batchnorm", {x, gamma, beta},
               [px, pg, pb, xhat, inv_std, m, n, train](const std::vector<double>& g) mutable {
                   if (pg.requires_grad) {
                       pg.ensure_grad();
                       for (int j = 0; j < n; ++j) {
                           double s = 0.0;
                           for (int i = 0; i < m; ++i)
                               s += g[static_cast<size_t>(i) * n + j] *
                                    (*xhat)[static_cast<size_t>(i) * n + j];
                           accumulate(pg, j, s);
                       }
                   }
                   if (pb.requires_grad) {
                       pb.ensure_grad();
                       for (int j = 0; j < n; ++j) {
                           double s = 0.0;
                           for (int i = 0; i < m; ++i) s += g[static_cast<size_t>(i) * n + j];
                           accumulate(pb, j, s);
                       }
                   }
                   if (px.requires_grad) {
                       px.ensure_grad();
                       if (train) {
                           // Batch statistics participate in the gradient.
                           for (int j = 0; j < n; ++j) {
                               double mean_dy = 0.0, mean_dy_xhat = 0.0;
                               const double gj = (*pg.values)[j];
                               for (int i = 0; i < m; ++i) {
                                   const size_t idx = static_cast<size_t>(i) * n + j;
                                   const double dy = g[idx] * gj;
                                   mean_dy += dy;
                                   mean_dy_xhat += dy * (*xhat)[idx];
                               }
                               mean_dy /= m;
                               mean_dy_xhat /= m;
                               for (int i = 0; i < m; ++i) {
                                   const size_t idx = static_cast<size_t>(i) * n + j;
                                   const double dy = g[idx] * gj;
                                   accumulate(px, idx,
                                              (*inv_std)[j] *
                                                  (dy - mean_dy - (*xhat)[idx] * mean_dy_xhat));
                               }
                           }
                       } else {
                           for (int i = 0; i < m; ++i)
                               for (int j = 0; j < n; ++j) {
                                   const size_t idx = static_cast<size_t>(i) * n + j;
                                   accumulate(px, idx, g[idx] * (*pg.values)[j] * (*inv_std)[j]);
                               }
                       }
                   }
               });
    }
    return out;
}

namespace {

void check_segments(const char* op, const Tensor& x, const std::vector<int>& ids,
                    int num_segments) {
    require_2d(op, x);
    if (static_cast<int>(ids.size()) != x.dim(0))
        shape_error(op, "segment ids count " + std::to_string(ids.size()) +
                            " != rows " + std::to_string(x.dim(0)));
    for (int s : ids)
        if (s < 0 || s >= num_segments)
            shape_error(op, "segment id " + std::to_string(s) + " out of range");
}

} // namespace

Tensor segment_sum(const Tensor& x, const std::vector<int>& ids, int num_segments) {
    check_segments("segment_sum", x, ids, num_segments);
    const int m = x.dim(0), n = x.dim(1);
    Tensor out = Tensor::zeros({num_segments, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            (*out.values)[static_cast<size_t>(ids[i]) * n + j] +=
                (*x.values)[static_cast<size_t>(i) * n + j];

    if (track(x)) {
        Tensor px = x;
        auto ids_copy = std::make_shared<std::vector<int>>(ids);
        record(out, "segment_sum", {x}, [px, ids_copy, m, n](const std::vector<double>& g) mutable {
            px.ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    accumulate(px, static_cast<size_t>(i) * n + j,
                               g[static_cast<size_t>((*ids_copy)[i]) * n + j]);
        });
    }
    return out;
}

Tensor segment_mean(const Tensor& x, const std::vector<int>& ids, int num_segments) {
    check_segments("segment_mean", x, ids, num_segments);
    const int m = x.dim(0), n = x.dim(1);
    auto counts = std::make_shared<std::vector<double>>(num_segments, 0.0);
    for (int s : ids) (*counts)[s] += 1.0;

    Tensor out = Tensor::zeros({num_segments, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            (*out.values)[static_cast<size_t>(ids[i]) * n + j] +=
                (*x.values)[static_cast<size_t>(i) * n + j];
    for (int s = 0; s < num_segments; ++s) {
        const double c = std::max((*counts)[s], 1.0); // empty segments stay zero
        for (int j = 0; j < n; ++j) (*out.values)[static_cast<size_t>(s) * n + j] /= c;
    }

    if (track(x)) {
        Tensor px = x;
        auto ids_copy = std::make_shared<std::vector<int>>(ids);
        record(out, "segment_mean", {x},
               [px, ids_copy, counts, m, n](const std::vector<double>& g) mutable {
                   px.ensure_grad();
                   for (int i = 0; i < m; ++i) {
                       const int s = (*ids_copy)[i];
                       const double c = std::max((*counts)[s], 1.0);
                       for (int j = 0; j < n; ++j)
                           accumulate(px, static_cast<size_t>(i) * n + j,
                                      g[static_cast<size_t>(s) * n + j] / c);
                   }
               });
    }
    return out;
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& codes) {
    require_2d("embedding_lookup", table);
    const int vocab = table.dim(0), d = table.dim(1);
    for (int c : codes)
        if (c < 0 || c >= vocab)
            shape_error("embedding_lookup",
                        "code " + std::to_string(c) + " out of vocab " + std::to_string(vocab));
    const int m = static_cast<int>(codes.size());
    Tensor out = Tensor::zeros({m, d});
    for (int i = 0; i < m; ++i)
        std::copy(table.values->begin() + static_cast<size_t>(codes[i]) * d,
                  table.values->begin() + static_cast<size_t>(codes[i] + 1) * d,
                  out.values->begin() + static_cast<size_t>(i) * d);

    if (track(table)) {
        Tensor pt = table;
        auto codes_copy = std::make_shared<std::vector<int>>(codes);
        record(out, "embedding_lookup", {table},
               [pt, codes_copy, m, d](const std::vector<double>& g) mutable {
                   pt.ensure_grad();
                   for (int i = 0; i < m; ++i)
                       for (int j = 0; j < d; ++j)
                           accumulate(pt, static_cast<size_t>((*codes_copy)[i]) * d + j,
                                      g[static_cast<size_t>(i) * d + j]);
               });
    }
    return out;
}

Tensor scatter_rows(const Tensor& rows, const std::vector<std::vector<int>>& dests,
                    int total_rows) {
    require_2d("scatter_rows", rows);
    const int m = rows.dim(0), n = rows.dim(1);
    if (static_cast<int>(dests.size()) != m)
        shape_error("scatter_rows", "destination list count " + std::to_string(dests.size()) +
                                        " != rows " + std::to_string(m));
    Tensor out = Tensor::zeros({total_rows, n});
    for (int r = 0; r < m; ++r)
        for (int dst : dests[r]) {
            if (dst < 0 || dst >= total_rows)
                shape_error("scatter_rows", "destination " + std::to_string(dst) + " out of range");
            for (int j = 0; j < n; ++j)
                (*out.values)[static_cast<size_t>(dst) * n + j] +=
                    (*rows.values)[static_cast<size_t>(r) * n + j];
        }

    if (track(rows)) {
        Tensor pr = rows;
        auto dests_copy = std::make_shared<std::vector<std::vector<int>>>(dests);
        record(out, "scatter_rows", {rows},
               [pr, dests_copy, m, n](const std::vector<double>& g) mutable {
                   pr.ensure_grad();
                   for (int r = 0; r < m; ++r)
                       for (int dst : (*dests_copy)[r])
                           for (int j = 0; j < n; ++j)
                               accumulate(pr, static_cast<size_t>(r) * n + j,
                                          g[static_cast<size_t>(dst) * n + j]);
               });
    }
    return out;
}

// ---- losses -----------------------------------------------------------------

Tensor mae_loss(const Tensor& pred, const Tensor& target) {
    if (pred.shape != target.shape)
        shape_error("mae_loss", "shapes differ: " + shape_str(pred.shape) + " vs " +
                                    shape_str(target.shape));
    const size_t n = pred.numel();
    if (n == 0) shape_error("mae_loss", "empty prediction");
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += std::abs((*pred.values)[i] - (*target.values)[i]);
    Tensor out = Tensor::scalar(s / static_cast<double>(n));

    if (track(pred)) {
        Tensor pp = pred, pt = target;
        record(out, "mae_loss", {pred}, [pp, pt, n](const std::vector<double>& g) mutable {
            pp.ensure_grad();
            const double inv = g[0] / static_cast<double>(n);
            for (size_t i = 0; i < n; ++i) {
                const double d = (*pp.values)[i] - (*pt.values)[i];
                const double sign = (d > 0.0) ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                accumulate(pp, i, sign * inv);
            }
        });
    }
    return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    require_2d("softmax_cross_entropy", logits);
    const int m = logits.dim(0), c = logits.dim(1);
    if (static_cast<int>(labels.size()) != m)
        shape_error("softmax_cross_entropy", "label count " + std::to_string(labels.size()) +
                                                 " != rows " + std::to_string(m));
    for (int y : labels)
        if (y < 0 || y >= c)
            shape_error("softmax_cross_entropy", "label " + std::to_string(y) + " out of range");

    auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(m) * c);
    double total = 0.0;
    for (int i = 0; i < m; ++i) {
        const double* row = logits.data() + static_cast<size_t>(i) * c;
        double mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < c; ++j) {
            (*probs)[static_cast<size_t>(i) * c + j] = std::exp(row[j] - mx);
            sum += (*probs)[static_cast<size_t>(i) * c + j];
        }
        for (int j = 0; j < c; ++j) (*probs)[static_cast<size_t>(i) * c + j] /= sum;
        total += (mx + std::log(sum)) - row[labels[i]];
    }
    Tensor out = Tensor::scalar(total / m);

    if (track(logits)) {
        Tensor pl = logits;
        auto labels_copy = std::make_shared<std::vector<int>>(labels);
        record(out, "softmax_cross_entropy", {logits},
               [pl, probs, labels_copy, m, c](const std::vector<double>& g) mutable {
                   pl.ensure_grad();
                   const double inv = g[0] / m;
                   for (int i = 0; i < m; ++i)
                       for (int j = 0; j < c; ++j) {
                           const double onehot = (j == (*labels_copy)[i]) ? 1.0 : 0.0;
                           accumulate(pl, static_cast<size_t>(i) * c + j,
                                      ((*probs)[static_cast<size_t>(i) * c + j] - onehot) * inv);
                       }
               });
    }
    return out;
}

Tensor sigmoid_bce(const Tensor& logits, const Tensor& targets) {
    if (logits.shape != targets.shape)
        shape_error("sigmoid_bce", "shapes differ: " + shape_str(logits.shape) + " vs " +
                                       shape_str(targets.shape));
    const size_t n = logits.numel();
    if (n == 0) shape_error("sigmoid_bce", "empty logits");
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double z = (*logits.values)[i];
        const double y = (*targets.values)[i];
        total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    }
    Tensor out = Tensor::scalar(total / static_cast<double>(n));

    if (track(logits)) {
        Tensor pl = logits, pt = targets;
        record(out, "sigmoid_bce", {logits}, [pl, pt, n](const std::vector<double>& g) mutable {
            pl.ensure_grad();
            const double inv = g[0] / static_cast<double>(n);
            for (size_t i = 0; i < n; ++i) {
                const double z = (*pl.values)[i];
                const double sig = 1.0 / (1.0 + std::exp(-z));
                accumulate(pl, i, (sig - (*pt.values)[i]) * inv);
            }
        });
    }
    return out;
}

// ---- grad check ---------------------------------------------------------------

double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params, double h,
                  size_t coord_budget, uint64_t subsample_seed) {
    if (h <= 0.0) throw std::invalid_argument("grad_check: h must be positive");

    // Nondeterministic functions (e.g. dropout enabled) are rejected.
    {
        NoGradGuard ng;
        const double f1 = f().item();
        const double f2 = f().item();
        if (f1 != f2)
            throw std::runtime_error("grad_check: f is nondeterministic (dropout enabled?)");
    }

    for (const Tensor& p : params) {
        if (!p.requires_grad)
            throw std::invalid_argument("grad_check: parameter does not require grad");
        const_cast<Tensor&>(p).zero_grad();
    }
    Tensor loss = f();
    backward(loss);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const Tensor& p : params) analytic.push_back(p.grad_ref());

    // Coordinate selection: everything, or a deterministic subsample.
    size_t total = 0;
    for (const Tensor& p : params) total += p.numel();
    std::vector<std::pair<size_t, size_t>> coords; // (param index, flat index)
    if (total <= coord_budget) {
        for (size_t pi = 0; pi < params.size(); ++pi)
            for (size_t i = 0; i < params[pi].numel(); ++i) coords.emplace_back(pi, i);
    } else {
        std::mt19937_64 rng(subsample_seed);
        std::uniform_int_distribution<size_t> dist(0, total - 1);
        std::unordered_set<size_t> chosen;
        while (chosen.size() < coord_budget) chosen.insert(dist(rng));
        for (size_t flat : chosen) {
            size_t pi = 0, rem = flat;
            while (rem >= params[pi].numel()) {
                rem -= params[pi].numel();
                ++pi;
            }
            coords.emplace_back(pi, rem);
        }
        std::sort(coords.begin(), coords.end());
    }

    double worst = 0.0;
    NoGradGuard ng;
    for (auto [pi, i] : coords) {
        auto& vals = *params[pi].values;
        const double saved = vals[i];
        vals[i] = saved + h;
        const double fp = f().item();
        vals[i] = saved - h;
        const double fm = f().item();
        vals[i] = saved;
        const double numeric = (fp - fm) / (2.0 * h);
        const double a = analytic[pi][i];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    return worst;
}

} // namespace eigenformer
