#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "sib/rng.hpp"

namespace sib::nn {

using Mat = Eigen::MatrixXd;

// A trainable tensor. Lives outside any graph; graphs reference it through
// leaf nodes and accumulate into `grad` on backward().
struct Parameter {
    std::string name;
    Mat value;
    Mat grad;
    bool trainable = true;

    Parameter(std::string n, Mat v)
        : name(std::move(n)), value(std::move(v)), grad(Mat::Zero(value.rows(), value.cols())) {}

    void zero_grad() { grad.setZero(); }
};

class Graph;

// Handle into a Graph node. Valid only while the graph is alive.
class Var {
public:
    Var() : g_(nullptr), idx_(-1) {}
    Var(Graph* g, int idx) : g_(g), idx_(idx) {}
    const Mat& val() const;
    int rows() const { return static_cast<int>(val().rows()); }
    int cols() const { return static_cast<int>(val().cols()); }
    int idx() const { return idx_; }
    Graph* graph() const { return g_; }

private:
    Graph* g_;
    int idx_;
};

// Dynamic computation tape. Nodes are appended in topological order during
// the forward pass; backward() walks them in reverse.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // Dropout is active only when a training rng is attached.
    void set_training(Rng* dropout_rng) { drop_rng_ = dropout_rng; }
    bool training() const { return drop_rng_ != nullptr; }

    Var constant(Mat v);
    Var zeros(int rows, int cols);
    // Leaf bound to a parameter. Repeated calls with the same parameter
    // return the same node, so large tables are materialized once per graph.
    Var param(Parameter& p);
    // Gather rows of a parameter table without materializing the table.
    Var lookup(Parameter& table, const std::vector<int>& ids);

    Var add(Var a, Var b);                 // same shape
    Var add_rowvec(Var a, Var b);          // b is 1 x cols, broadcast over rows
    Var sub(Var a, Var b);
    Var scale(Var a, double s);
    Var hadamard(Var a, Var b);
    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var tanh(Var a);
    Var sigmoid(Var a);
    Var gelu(Var a);
    Var softmax_rows(Var a);
    Var layernorm_rows(Var x, Var gamma, Var beta, double eps = 1e-5);
    Var rows_gather(Var table, const std::vector<int>& ids);
    Var block(Var a, int r0, int c0, int rows, int cols);
    Var concat_cols(Var a, Var b);
    Var concat_rows(const std::vector<Var>& parts);
    Var sum_all(Var a);                    // 1x1
    Var dropout(Var a, double p);
    // Stable -log softmax(logits)[label]; logits is 1 x K. Returns 1x1.
    Var cross_entropy_logits(Var logits, int label);

    void backward(Var loss);

    const Mat& value(int idx) const { return nodes_[idx].value; }
    const Mat& grad(int idx) const { return nodes_[idx].grad; }
    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Mat value;
        Mat grad;
        std::function<void(Graph&, Node&)> back;  // may be empty for leaves
        Parameter* param = nullptr;
        std::vector<int> parents;
    };

    int push(Mat value, std::vector<int> parents, std::function<void(Graph&, Node&)> back);
    Mat& grad_mut(int idx) { return nodes_[idx].grad; }

    std::vector<Node> nodes_;
    std::unordered_map<Parameter*, int> param_nodes_;
    Rng* drop_rng_ = nullptr;

    friend class Var;
};

inline const Mat& Var::val() const { return g_->value(idx_); }

// Softmax over the entries of a 1 x n row, computed stably.
Eigen::RowVectorXd softmax_row(const Eigen::RowVectorXd& x);

}  // namespace sib::nn
