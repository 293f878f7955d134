#ifndef CCAF_AUTODIFF_HPP
#define CCAF_AUTODIFF_HPP

// Minimal reverse-mode autodiff over Eigen matrices. Double precision
// throughout so finite-difference checks are meaningful.

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace ccaf {

using Mat = Eigen::MatrixXd;

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Mat value;
    Mat grad;                 // same shape as value, lazily zero-initialized
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;  // scatters this->grad to parents
    bool requires_grad = false;

    explicit Node(Mat v, bool req = false)
        : value(std::move(v)), requires_grad(req) {}

    void ensure_grad() {
        if (grad.size() == 0) grad = Mat::Zero(value.rows(), value.cols());
    }
    double scalar() const { return value(0, 0); }
};

Var constant(Mat v);
Var constant(double v);
Var leaf(Mat v);  // requires_grad = true

// Runs reverse accumulation from a scalar root. Grad buffers of reachable
// nodes with requires_grad are filled; existing grads are accumulated into.
void backward(const Var& root);
void zero_grad(const std::vector<Var>& params);

// ---- ops ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);      // elementwise
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var matmul(const Var& a, const Var& b);
Var relu(const Var& a);
Var mean_all(const Var& a);               // -> 1x1
Var sum_all(const Var& a);                // -> 1x1
Var rowwise_add(const Var& a, const Var& bias);   // bias: 1 x C
Var row_normalize(const Var& a, double eps = 1e-12);  // L2 per row
Var rowwise_norm(const Var& a, double eps = 1e-12);   // -> n x 1
Var log_softmax_rows(const Var& a);
Var transpose(const Var& a);
Var rows_subset(const Var& a, std::vector<int> idx);
Var detach(const Var& a);

// Mean over groups of consecutive rows: (G*g_size) x C -> G x C.
Var group_row_mean(const Var& a, int group_size);

// Concatenate groups of consecutive rows: (G*r) x C -> G x (r*C).
Var flatten_rows(const Var& a, int rows_per_group);

// Batch norm over the batch dimension (rows). In train mode uses batch
// statistics and updates running estimates; in eval mode uses running stats
// (no graph through them). gamma/beta are 1 x C.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta,
               Mat& running_mean, Mat& running_var,
               bool training, double momentum = 0.1, double eps = 1e-5);

}  // namespace ccaf

#endif
