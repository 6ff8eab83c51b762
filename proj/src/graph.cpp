#include "sib/graph.hpp"

#include <cmath>
#include <stdexcept>

namespace sib::nn {

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244008443621048;
constexpr double kInvSqrt2Pi = 0.3989422804014326779399460599344;
}  // namespace

Eigen::RowVectorXd softmax_row(const Eigen::RowVectorXd& x) {
    const double m = x.maxCoeff();
    Eigen::RowVectorXd e = (x.array() - m).exp();
    return e / e.sum();
}

int Graph::push(Mat value, std::vector<int> parents, std::function<void(Graph&, Node&)> back) {
    Node n;
    n.value = std::move(value);
    n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.back = std::move(back);
    n.parents = std::move(parents);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Var Graph::constant(Mat v) { return Var(this, push(std::move(v), {}, nullptr)); }

Var Graph::zeros(int rows, int cols) { return constant(Mat::Zero(rows, cols)); }

Var Graph::param(Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var(this, it->second);
    int idx = push(p.value, {}, nullptr);
    nodes_[idx].param = &p;
    param_nodes_[&p] = idx;
    return Var(this, idx);
}

Var Graph::lookup(Parameter& table, const std::vector<int>& ids) {
    Mat y(static_cast<Eigen::Index>(ids.size()), table.value.cols());
    for (size_t k = 0; k < ids.size(); ++k) y.row(static_cast<Eigen::Index>(k)) = table.value.row(ids[k]);
    Parameter* tp = &table;
    return Var(this, push(std::move(y), {}, [tp, ids](Graph&, Node& n) {
        if (!tp->trainable) return;
        for (size_t k = 0; k < ids.size(); ++k)
            tp->grad.row(ids[k]) += n.grad.row(static_cast<Eigen::Index>(k));
    }));
}

Var Graph::add(Var a, Var b) {
    int ia = a.idx(), ib = b.idx();
    return Var(this, push(nodes_[ia].value + nodes_[ib].value, {ia, ib},
                          [ia, ib](Graph& g, Node& n) {
                              g.grad_mut(ia) += n.grad;
                              g.grad_mut(ib) += n.grad;
                          }));
}

Var Graph::add_rowvec(Var a, Var b) {
    int ia = a.idx(), ib = b.idx();
    Mat v = nodes_[ia].value;
    v.rowwise() += Eigen::RowVectorXd(nodes_[ib].value.row(0));
    return Var(this, push(std::move(v), {ia, ib},
                          [ia, ib](Graph& g, Node& n) {
                              g.grad_mut(ia) += n.grad;
                              g.grad_mut(ib).row(0) += n.grad.colwise().sum();
                          }));
}

Var Graph::sub(Var a, Var b) {
    int ia = a.idx(), ib = b.idx();
    return Var(this, push(nodes_[ia].value - nodes_[ib].value, {ia, ib},
                          [ia, ib](Graph& g, Node& n) {
                              g.grad_mut(ia) += n.grad;
                              g.grad_mut(ib) -= n.grad;
                          }));
}

Var Graph::scale(Var a, double s) {
    int ia = a.idx();
    return Var(this, push(nodes_[ia].value * s, {ia},
                          [ia, s](Graph& g, Node& n) { g.grad_mut(ia) += n.grad * s; }));
}

Var Graph::hadamard(Var a, Var b) {
    int ia = a.idx(), ib = b.idx();
    return Var(this, push(nodes_[ia].value.cwiseProduct(nodes_[ib].value), {ia, ib},
                          [ia, ib](Graph& g, Node& n) {
                              g.grad_mut(ia) += n.grad.cwiseProduct(g.nodes_[ib].value);
                              g.grad_mut(ib) += n.grad.cwiseProduct(g.nodes_[ia].value);
                          }));
}

Var Graph::matmul(Var a, Var b) {
    int ia = a.idx(), ib = b.idx();
    return Var(this, push(nodes_[ia].value * nodes_[ib].value, {ia, ib},
                          [ia, ib](Graph& g, Node& n) {
                              g.grad_mut(ia) += n.grad * g.nodes_[ib].value.transpose();
                              g.grad_mut(ib) += g.nodes_[ia].value.transpose() * n.grad;
                          }));
}

Var Graph::transpose(Var a) {
    int ia = a.idx();
    return Var(this, push(nodes_[ia].value.transpose(), {ia},
                          [ia](Graph& g, Node& n) { g.grad_mut(ia) += n.grad.transpose(); }));
}

Var Graph::tanh(Var a) {
    int ia = a.idx();
    Mat t = nodes_[ia].value.array().tanh();
    return Var(this, push(std::move(t), {ia}, [ia](Graph& g, Node& n) {
        g.grad_mut(ia).array() += n.grad.array() * (1.0 - n.value.array().square());
    }));
}

Var Graph::sigmoid(Var a) {
    int ia = a.idx();
    Mat s = (1.0 / (1.0 + (-nodes_[ia].value.array()).exp())).matrix();
    return Var(this, push(std::move(s), {ia}, [ia](Graph& g, Node& n) {
        g.grad_mut(ia).array() += n.grad.array() * n.value.array() * (1.0 - n.value.array());
    }));
}

Var Graph::gelu(Var a) {
    int ia = a.idx();
    const Mat& x = nodes_[ia].value;
    Mat phi = x.unaryExpr([](double v) { return 0.5 * (1.0 + std::erf(v * kInvSqrt2)); });
    Mat y = x.cwiseProduct(phi);
    return Var(this, push(std::move(y), {ia}, [ia, phi](Graph& g, Node& n) {
        const Mat& x = g.nodes_[ia].value;
        Mat dens = (kInvSqrt2Pi * (-0.5 * x.array().square()).exp()).matrix();
        g.grad_mut(ia).array() += n.grad.array() * (phi.array() + x.array() * dens.array());
    }));
}

Var Graph::softmax_rows(Var a) {
    int ia = a.idx();
    const Mat& x = nodes_[ia].value;
    Mat y(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) y.row(r) = softmax_row(x.row(r));
    return Var(this, push(std::move(y), {ia}, [ia](Graph& g, Node& n) {
        for (Eigen::Index r = 0; r < n.value.rows(); ++r) {
            const auto yr = n.value.row(r).array();
            const auto gr = n.grad.row(r).array();
            const double dot = (gr * yr).sum();
            g.grad_mut(ia).row(r).array() += (gr - dot) * yr;
        }
    }));
}

Var Graph::layernorm_rows(Var x, Var gamma, Var beta, double eps) {
    int ix = x.idx(), ig = gamma.idx(), ib = beta.idx();
    const Mat& v = nodes_[ix].value;
    const Eigen::Index rows = v.rows(), cols = v.cols();
    Mat xhat(rows, cols);
    Eigen::VectorXd inv_std(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const double mu = v.row(r).mean();
        const double var = (v.row(r).array() - mu).square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (v.row(r).array() - mu) * inv_std(r);
    }
    Mat y = xhat;
    y.array().rowwise() *= nodes_[ig].value.row(0).array();
    y.rowwise() += Eigen::RowVectorXd(nodes_[ib].value.row(0));
    return Var(this, push(std::move(y), {ix, ig, ib},
                          [ix, ig, ib, xhat, inv_std](Graph& g, Node& n) {
                              const Eigen::RowVectorXd gamma = g.nodes_[ig].value.row(0);
                              for (Eigen::Index r = 0; r < n.value.rows(); ++r) {
                                  Eigen::RowVectorXd dxhat =
                                      n.grad.row(r).cwiseProduct(gamma);
                                  const double m1 = dxhat.mean();
                                  const double m2 = dxhat.cwiseProduct(xhat.row(r)).mean();
                                  g.grad_mut(ix).row(r) +=
                                      ((dxhat.array() - m1 - xhat.row(r).array() * m2) * inv_std(r)).matrix();
                                  g.grad_mut(ig).row(0) += n.grad.row(r).cwiseProduct(xhat.row(r));
                                  g.grad_mut(ib).row(0) += n.grad.row(r);
                              }
                          }));
}

Var Graph::rows_gather(Var table, const std::vector<int>& ids) {
    int it = table.idx();
    const Mat& t = nodes_[it].value;
    Mat y(static_cast<Eigen::Index>(ids.size()), t.cols());
    for (size_t k = 0; k < ids.size(); ++k) y.row(static_cast<Eigen::Index>(k)) = t.row(ids[k]);
    return Var(this, push(std::move(y), {it}, [it, ids](Graph& g, Node& n) {
        for (size_t k = 0; k < ids.size(); ++k)
            g.grad_mut(it).row(ids[k]) += n.grad.row(static_cast<Eigen::Index>(k));
    }));
}

Var Graph::block(Var a, int r0, int c0, int rows, int cols) {
    int ia = a.idx();
    return Var(this, push(nodes_[ia].value.block(r0, c0, rows, cols), {ia},
                          [ia, r0, c0, rows, cols](Graph& g, Node& n) {
                              g.grad_mut(ia).block(r0, c0, rows, cols) += n.grad;
                          }));
}

Var Graph::concat_cols(Var a, Var b) {
    int ia = a.idx(), ib = b.idx();
    const Mat& va = nodes_[ia].value;
    const Mat& vb = nodes_[ib].value;
    Mat y(va.rows(), va.cols() + vb.cols());
    y << va, vb;
    const int ca = static_cast<int>(va.cols());
    return Var(this, push(std::move(y), {ia, ib}, [ia, ib, ca](Graph& g, Node& n) {
        g.grad_mut(ia) += n.grad.leftCols(ca);
        g.grad_mut(ib) += n.grad.rightCols(n.grad.cols() - ca);
    }));
}

Var Graph::concat_rows(const std::vector<Var>& parts) {
    std::vector<int> idxs;
    Eigen::Index rows = 0;
    for (const Var& p : parts) {
        idxs.push_back(p.idx());
        rows += nodes_[p.idx()].value.rows();
    }
    Mat y(rows, nodes_[idxs[0]].value.cols());
    Eigen::Index at = 0;
    for (int i : idxs) {
        y.middleRows(at, nodes_[i].value.rows()) = nodes_[i].value;
        at += nodes_[i].value.rows();
    }
    return Var(this, push(std::move(y), idxs, [idxs](Graph& g, Node& n) {
        Eigen::Index at = 0;
        for (int i : idxs) {
            const Eigen::Index r = g.nodes_[i].value.rows();
            g.grad_mut(i) += n.grad.middleRows(at, r);
            at += r;
        }
    }));
}

Var Graph::sum_all(Var a) {
    int ia = a.idx();
    Mat y(1, 1);
    y(0, 0) = nodes_[ia].value.sum();
    return Var(this, push(std::move(y), {ia}, [ia](Graph& g, Node& n) {
        g.grad_mut(ia).array() += n.grad(0, 0);
    }));
}

Var Graph::dropout(Var a, double p) {
    if (!training() || p <= 0.0) return a;
    int ia = a.idx();
    const Mat& x = nodes_[ia].value;
    Mat mask(x.rows(), x.cols());
    const double keep = 1.0 - p;
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        for (Eigen::Index c = 0; c < x.cols(); ++c)
            mask(r, c) = drop_rng_->bernoulli(keep) ? 1.0 / keep : 0.0;
    return Var(this, push(x.cwiseProduct(mask), {ia}, [ia, mask](Graph& g, Node& n) {
        g.grad_mut(ia) += n.grad.cwiseProduct(mask);
    }));
}

Var Graph::cross_entropy_logits(Var logits, int label) {
    int il = logits.idx();
    const Eigen::RowVectorXd x = nodes_[il].value.row(0);
    const double m = x.maxCoeff();
    const double lse = m + std::log((x.array() - m).exp().sum());
    Mat y(1, 1);
    y(0, 0) = lse - x(label);
    return Var(this, push(std::move(y), {il}, [il, label](Graph& g, Node& n) {
        Eigen::RowVectorXd p = softmax_row(g.nodes_[il].value.row(0));
        p(label) -= 1.0;
        g.grad_mut(il).row(0) += n.grad(0, 0) * p;
    }));
}

void Graph::backward(Var loss) {
    Node& top = nodes_[loss.idx()];
    if (top.value.rows() != 1 || top.value.cols() != 1)
        throw std::logic_error("backward() expects a scalar loss");
    top.grad(0, 0) = 1.0;
    for (int i = loss.idx(); i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.back) n.back(*this, n);
        if (n.param && n.param->trainable) n.param->grad += n.grad;
    }
}

}  // namespace sib::nn
