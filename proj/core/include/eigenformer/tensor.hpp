#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace eigenformer {

struct TapeNode;

/// Dense double-precision tensor. Copies are shallow: they share both the
/// value buffer and the gradient buffer, so a Tensor behaves as a handle.
/// Gradient buffers exist from creation for requires_grad leaves and from
/// record time for intermediates.
struct Tensor {
    std::vector<int> shape;
    std::shared_ptr<std::vector<double>> values;
    std::shared_ptr<std::vector<double>> grad;
    bool requires_grad = false;
    std::shared_ptr<TapeNode> node; // null for leaves

    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
    static Tensor from(std::vector<int> shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor uniform(std::vector<int> shape, double lo, double hi, std::mt19937_64& rng,
                          bool requires_grad = false);

    size_t numel() const;
    int dim(int i) const { return shape[i]; }
    int ndim() const { return static_cast<int>(shape.size()); }
    bool is_scalar() const { return numel() == 1; }
    double item() const; // scalar only

    double* data() { return values->data(); }
    const double* data() const { return values->data(); }
    double at(size_t i) const { return (*values)[i]; }

    void ensure_grad();
    void zero_grad();
    const std::vector<double>& grad_ref() const;

    /// Deep copy of values only (no node, no grad).
    Tensor detached_copy() const;
};

/// One recorded primitive: the inputs it consumed, the output cotangent
/// buffer, and how to push that cotangent back into the inputs.
struct TapeNode {
    const char* op = "";
    std::vector<Tensor> parents;
    std::shared_ptr<std::vector<double>> out_grad;
    std::function<void(const std::vector<double>& gout)> backward;
};

/// Ordered record of the primitives reachable from a loss, topologically
/// sorted. Running it visits every node exactly once and consumes the tape.
class Tape {
public:
    static Tape from(const Tensor& loss);
    size_t size() const { return order_.size(); }
    void run();

private:
    std::vector<std::shared_ptr<TapeNode>> order_; // parents before consumers
    Tensor root_;
};

/// Reverse-mode sweep from a scalar loss; gradients land on every
/// requires_grad leaf reachable from it. The tape is consumed.
void backward(Tensor& loss);

/// Thread-local switch: when disabled, primitives do not record tape nodes.
bool grad_enabled();
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// ---- primitives -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b); // [m,k]x[k,n]
Tensor add(const Tensor& a, const Tensor& b);    // same shape
Tensor mul(const Tensor& a, const Tensor& b);    // same shape, elementwise
Tensor add_rowvec(const Tensor& x, const Tensor& b); // [m,n] + [n] broadcast
Tensor mul_rowvec(const Tensor& x, const Tensor& v); // [m,n] * [n] broadcast
Tensor mul_colvec(const Tensor& x, const Tensor& c); // [m,n] * [m] broadcast
Tensor scale(const Tensor& x, double c);
Tensor concat_cols(const std::vector<Tensor>& parts); // along last dim
Tensor concat_rows(const std::vector<Tensor>& parts); // along first dim
Tensor slice_rows(const Tensor& x, int begin, int end);
Tensor reshape(const Tensor& x, std::vector<int> shape);
Tensor transpose(const Tensor& x); // 2D
Tensor relu(const Tensor& x);
Tensor softmax_rows(const Tensor& x); // 2D, stable
Tensor sum_all(const Tensor& x);      // -> scalar

/// Inverted dropout: keeps with probability 1-rate and scales by 1/(1-rate)
/// at train time; identity at eval or rate 0.
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng, bool train);

/// Running statistics owned by a layer's normalization site.
struct BatchNormState {
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double eps = 1e-5;
    double momentum = 0.1;

    explicit BatchNormState(int features = 0)
        : running_mean(features, 0.0), running_var(features, 1.0) {}
};

/// Train mode normalizes by batch statistics (biased variance) and updates
/// the running estimates; eval mode normalizes by the running estimates.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                 bool train);

Tensor segment_sum(const Tensor& x, const std::vector<int>& ids, int num_segments);
Tensor segment_mean(const Tensor& x, const std::vector<int>& ids, int num_segments);

/// Row gather: out[i,:] = table[codes[i],:]. Gradient scatter-adds rows.
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& codes);

/// Row scatter with duplication: row r of `rows` is copied to every index in
/// dests[r]; untouched output rows are zero.
Tensor scatter_rows(const Tensor& rows, const std::vector<std::vector<int>>& dests,
                    int total_rows);

// ---- scalar losses ---------------------------------------------------------

Tensor mae_loss(const Tensor& pred, const Tensor& target);
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);
Tensor sigmoid_bce(const Tensor& logits, const Tensor& targets);

// ---- verification ----------------------------------------------------------

/// Central-difference comparison of analytic gradients for a deterministic
/// scalar function of `params`. Rejects nondeterministic functions. Returns
/// the worst relative error with denominator max(|analytic|,|numeric|,1e-8).
/// Above `coord_budget` total coordinates a deterministic random subsample
/// is checked instead.
double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                  double h = 1e-5, size_t coord_budget = 10000, uint64_t subsample_seed = 0);

} // namespace eigenformer
