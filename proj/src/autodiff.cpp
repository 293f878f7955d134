#include "ccaf/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace ccaf {

Var constant(Mat v) { return std::make_shared<Node>(std::move(v), false); }
Var constant(double v) { return constant(Mat::Constant(1, 1, v)); }
Var leaf(Mat v) { return std::make_shared<Node>(std::move(v), true); }

static Var make(Mat v, std::vector<Var> parents,
                std::function<void(Node&)> fn) {
    bool req = false;
    for (auto& p : parents) req = req || p->requires_grad;
    auto n = std::make_shared<Node>(std::move(v), req);
    if (req) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(fn);
    }
    return n;
}

void backward(const Var& root) {
    if (root->value.size() != 1)
        throw std::invalid_argument("backward: root must be scalar");
    // topo order via iterative DFS
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack{{root.get(), 0}};
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            Node* p = n->parents[i++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    root->ensure_grad();
    root->grad(0, 0) += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
    }
}

void zero_grad(const std::vector<Var>& params) {
    for (auto& p : params) p->grad = Mat::Zero(p->value.rows(), p->value.cols());
}

static void accum(Var& p, const Mat& g) {
    if (!p->requires_grad) return;
    p->ensure_grad();
    p->grad += g;
}

Var add(const Var& a, const Var& b) {
    return make(a->value + b->value, {a, b}, [](Node& n) {
        accum(n.parents[0], n.grad);
        accum(n.parents[1], n.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    return make(a->value - b->value, {a, b}, [](Node& n) {
        accum(n.parents[0], n.grad);
        accum(n.parents[1], (-n.grad).eval());
    });
}

Var mul(const Var& a, const Var& b) {
    return make(a->value.cwiseProduct(b->value), {a, b}, [](Node& n) {
        accum(n.parents[0], n.grad.cwiseProduct(n.parents[1]->value));
        accum(n.parents[1], n.grad.cwiseProduct(n.parents[0]->value));
    });
}

Var scale(const Var& a, double s) {
    return make(a->value * s, {a}, [s](Node& n) {
        accum(n.parents[0], (n.grad * s).eval());
    });
}

Var add_scalar(const Var& a, double s) {
    return make(a->value.array() + s, {a}, [](Node& n) {
        accum(n.parents[0], n.grad);
    });
}

Var matmul(const Var& a, const Var& b) {
    if (a->value.cols() != b->value.rows())
        throw std::invalid_argument("matmul: inner dimension mismatch");
    return make(a->value * b->value, {a, b}, [](Node& n) {
        accum(n.parents[0], n.grad * n.parents[1]->value.transpose());
        accum(n.parents[1], n.parents[0]->value.transpose() * n.grad);
    });
}

Var relu(const Var& a) {
    return make(a->value.cwiseMax(0.0), {a}, [](Node& n) {
        Mat mask = (n.parents[0]->value.array() > 0.0).cast<double>();
        accum(n.parents[0], n.grad.cwiseProduct(mask));
    });
}

Var mean_all(const Var& a) {
    double inv = 1.0 / static_cast<double>(a->value.size());
    return make(Mat::Constant(1, 1, a->value.mean()), {a}, [inv](Node& n) {
        auto& p = n.parents[0];
        accum(p, Mat::Constant(p->value.rows(), p->value.cols(),
                               n.grad(0, 0) * inv));
    });
}

Var sum_all(const Var& a) {
    return make(Mat::Constant(1, 1, a->value.sum()), {a}, [](Node& n) {
        auto& p = n.parents[0];
        accum(p, Mat::Constant(p->value.rows(), p->value.cols(), n.grad(0, 0)));
    });
}

Var rowwise_add(const Var& a, const Var& bias) {
    Mat v = a->value;
    v.rowwise() += bias->value.row(0);
    return make(std::move(v), {a, bias}, [](Node& n) {
        accum(n.parents[0], n.grad);
        accum(n.parents[1], n.grad.colwise().sum().eval());
    });
}

Var row_normalize(const Var& a, double eps) {
    Eigen::VectorXd norms = a->value.rowwise().norm().cwiseMax(eps);
    Mat v = norms.cwiseInverse().asDiagonal() * a->value;
    return make(std::move(v), {a}, [norms](Node& n) {
        const Mat& x = n.parents[0]->value;
        Mat g(x.rows(), x.cols());
        for (int i = 0; i < x.rows(); ++i) {
            double nn = norms(i);
            double dot = n.grad.row(i).dot(x.row(i));
            g.row(i) = n.grad.row(i) / nn - x.row(i) * (dot / (nn * nn * nn));
        }
        accum(n.parents[0], g);
    });
}

Var rowwise_norm(const Var& a, double eps) {
    Eigen::VectorXd norms = a->value.rowwise().norm().cwiseMax(eps);
    return make(Mat(norms), {a}, [norms](Node& n) {
        const Mat& x = n.parents[0]->value;
        Mat g(x.rows(), x.cols());
        for (int i = 0; i < x.rows(); ++i)
            g.row(i) = x.row(i) * (n.grad(i, 0) / norms(i));
        accum(n.parents[0], g);
    });
}

Var log_softmax_rows(const Var& a) {
    Mat v(a->value.rows(), a->value.cols());
    for (int i = 0; i < v.rows(); ++i) {
        double mx = a->value.row(i).maxCoeff();
        double lse = std::log((a->value.row(i).array() - mx).exp().sum()) + mx;
        v.row(i) = a->value.row(i).array() - lse;
    }
    return make(std::move(v), {a}, [](Node& n) {
        Mat soft = n.value.array().exp();
        Mat g(n.value.rows(), n.value.cols());
        for (int i = 0; i < g.rows(); ++i) {
            double s = n.grad.row(i).sum();
            g.row(i) = n.grad.row(i) - s * soft.row(i);
        }
        accum(n.parents[0], g);
    });
}

Var transpose(const Var& a) {
    return make(a->value.transpose(), {a}, [](Node& n) {
        accum(n.parents[0], n.grad.transpose().eval());
    });
}

Var rows_subset(const Var& a, std::vector<int> idx) {
    Mat v(static_cast<int>(idx.size()), a->value.cols());
    for (size_t i = 0; i < idx.size(); ++i) v.row(static_cast<int>(i)) = a->value.row(idx[i]);
    return make(std::move(v), {a}, [idx](Node& n) {
        auto& p = n.parents[0];
        Mat g = Mat::Zero(p->value.rows(), p->value.cols());
        for (size_t i = 0; i < idx.size(); ++i)
            g.row(idx[i]) += n.grad.row(static_cast<int>(i));
        accum(p, g);
    });
}

Var detach(const Var& a) { return constant(a->value); }

Var group_row_mean(const Var& a, int group_size) {
    if (group_size <= 0 || a->value.rows() % group_size != 0)
        throw std::invalid_argument("group_row_mean: rows not divisible by group size");
    int groups = static_cast<int>(a->value.rows()) / group_size;
    Mat v = Mat::Zero(groups, a->value.cols());
    for (int g = 0; g < groups; ++g)
        for (int k = 0; k < group_size; ++k) v.row(g) += a->value.row(g * group_size + k);
    v /= group_size;
    return make(std::move(v), {a}, [group_size](Node& n) {
        auto& p = n.parents[0];
        Mat g = Mat(p->value.rows(), p->value.cols());
        for (int i = 0; i < g.rows(); ++i)
            g.row(i) = n.grad.row(i / group_size) / group_size;
        accum(p, g);
    });
}

Var flatten_rows(const Var& a, int rows_per_group) {
    if (rows_per_group <= 0 || a->value.rows() % rows_per_group != 0)
        throw std::invalid_argument("flatten_rows: rows not divisible by group size");
    int groups = static_cast<int>(a->value.rows()) / rows_per_group;
    int c = static_cast<int>(a->value.cols());
    Mat v(groups, rows_per_group * c);
    for (int g = 0; g < groups; ++g)
        for (int r = 0; r < rows_per_group; ++r)
            v.block(g, r * c, 1, c) = a->value.row(g * rows_per_group + r);
    return make(std::move(v), {a}, [rows_per_group, c](Node& n) {
        auto& p = n.parents[0];
        Mat g(p->value.rows(), p->value.cols());
        for (int i = 0; i < g.rows(); ++i)
            g.row(i) = n.grad.block(i / rows_per_group, (i % rows_per_group) * c, 1, c);
        accum(p, g);
    });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta,
               Mat& running_mean, Mat& running_var,
               bool training, double momentum, double eps) {
    int n = static_cast<int>(x->value.rows());
    int c = static_cast<int>(x->value.cols());
    if (running_mean.size() == 0) {
        running_mean = Mat::Zero(1, c);
        running_var = Mat::Ones(1, c);
    }
    if (!training) {
        Mat inv_std = (running_var.array() + eps).sqrt().inverse();
        Mat xn = (x->value.rowwise() - running_mean.row(0)).array().rowwise() *
                 inv_std.row(0).array();
        Mat v = (xn.array().rowwise() * gamma->value.row(0).array()).rowwise() +
                beta->value.row(0).array();
        Mat scl = gamma->value.cwiseProduct(inv_std);
        return make(std::move(v), {x, gamma, beta}, [xn, scl](Node& nn) {
            accum(nn.parents[0], nn.grad.array().rowwise() * scl.row(0).array());
            accum(nn.parents[1], (nn.grad.cwiseProduct(xn)).colwise().sum().eval());
            accum(nn.parents[2], nn.grad.colwise().sum().eval());
        });
    }
    Mat mean = x->value.colwise().mean();
    Mat centered = x->value.rowwise() - mean.row(0);
    Mat var = centered.array().square().colwise().mean();
    running_mean = (1 - momentum) * running_mean + momentum * mean;
    running_var = (1 - momentum) * running_var + momentum * var;
    Mat inv_std = (var.array() + eps).sqrt().inverse();
    Mat xn = centered.array().rowwise() * inv_std.row(0).array();
    Mat v = (xn.array().rowwise() * gamma->value.row(0).array()).rowwise() +
            beta->value.row(0).array();
    return make(std::move(v), {x, gamma, beta},
                [xn, inv_std, n](Node& nn) {
        const Mat& gm = nn.parents[1]->value;
        Mat dxn = nn.grad.array().rowwise() * gm.row(0).array();
        // standard batch-norm backward
        Mat sum_dxn = dxn.colwise().sum();
        Mat sum_dxn_xn = (dxn.cwiseProduct(xn)).colwise().sum();
        Mat dx(dxn.rows(), dxn.cols());
        for (int i = 0; i < dx.rows(); ++i)
            dx.row(i) = (dxn.row(i) * n - sum_dxn.row(0) -
                         xn.row(i).cwiseProduct(sum_dxn_xn.row(0))) / n;
        dx = dx.array().rowwise() * inv_std.row(0).array();
        accum(nn.parents[0], dx);
        accum(nn.parents[1], (nn.grad.cwiseProduct(xn)).colwise().sum().eval());
        accum(nn.parents[2], nn.grad.colwise().sum().eval());
    });
}

}  // namespace ccaf
