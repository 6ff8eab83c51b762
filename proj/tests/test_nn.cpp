#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sib/encoder.hpp"
#include "sib/graph.hpp"
#include "sib/optim.hpp"
#include "sib/tokenizer.hpp"

using namespace sib;
using nn::Graph;
using nn::Mat;
using nn::Parameter;
using nn::Var;

namespace {

// Central finite differences of f w.r.t. one coordinate of p.
double fd_grad(Parameter& p, int r, int c, const std::function<double()>& f) {
    const double h = 1e-5 * std::max(1.0, std::abs(p.value(r, c)));
    const double orig = p.value(r, c);
    p.value(r, c) = orig + h;
    const double fp = f();
    p.value(r, c) = orig - h;
    const double fm = f();
    p.value(r, c) = orig;
    return (fp - fm) / (2.0 * h);
}

bool grad_close(double an, double fd, double atol, double rtol) {
    return std::abs(an - fd) <= atol + rtol * std::max(std::abs(an), std::abs(fd));
}

// Checks analytic grads of the built loss against finite differences on
// every coordinate of every parameter.
void check_grads(std::vector<Parameter*> params, const std::function<Var(Graph&)>& build,
                 double atol = 1e-9, double rtol = 1e-6) {
    auto eval = [&] {
        Graph g;
        return build(g).val()(0, 0);
    };
    Graph g;
    Var loss = build(g);
    for (Parameter* p : params) p->zero_grad();
    g.backward(loss);
    for (Parameter* p : params) {
        for (int r = 0; r < p->value.rows(); ++r)
            for (int c = 0; c < p->value.cols(); ++c) {
                const double fd = fd_grad(*p, r, c, eval);
                const double an = p->grad(r, c);
                INFO(p->name, "[", r, ",", c, "] analytic=", an, " fd=", fd);
                CHECK(grad_close(an, fd, atol, rtol));
            }
    }
}

}  // namespace

TEST_CASE("rng determinism and uniformity") {
    Rng a(7), b(7);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng r(123);
    double sum = 0;
    for (int i = 0; i < 20000; ++i) {
        double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        sum += u;
    }
    CHECK(sum / 20000 == doctest::Approx(0.5).epsilon(0.02));
    Rng f1 = Rng(5).fork("stream");
    Rng f2 = Rng(5).fork("stream");
    CHECK(f1.next_u64() == f2.next_u64());
    CHECK(Rng(5).fork("a").next_u64() != Rng(5).fork("b").next_u64());
}

TEST_CASE("rng uniform_int bounds") {
    Rng r(9);
    for (int i = 0; i < 1000; ++i) CHECK(r.uniform_int(7) < 7);
    Rng n(11);
    double mean = 0, var = 0;
    const int k = 20000;
    std::vector<double> zs(k);
    for (int i = 0; i < k; ++i) zs[i] = n.normal();
    for (double z : zs) mean += z / k;
    for (double z : zs) var += (z - mean) * (z - mean) / k;
    CHECK(mean == doctest::Approx(0.0).epsilon(0.05));
    CHECK(var == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("elementwise op gradients") {
    Rng rng(42);
    Parameter a("a", nn::init_normal(rng, 3, 4, 0.5));
    Parameter b("b", nn::init_normal(rng, 3, 4, 0.5));
    Parameter v("v", nn::init_normal(rng, 1, 4, 0.5));

    check_grads({&a, &b}, [&](Graph& g) {
        return g.sum_all(g.tanh(g.hadamard(g.add(g.param(a), g.param(b)), g.param(b))));
    });
    check_grads({&a, &v}, [&](Graph& g) {
        return g.sum_all(g.sigmoid(g.add_rowvec(g.param(a), g.param(v))));
    });
    check_grads({&a}, [&](Graph& g) { return g.sum_all(g.gelu(g.param(a))); });
    check_grads({&a, &b}, [&](Graph& g) {
        return g.sum_all(g.scale(g.sub(g.param(a), g.param(b)), 1.7));
    });
}

TEST_CASE("matmul, softmax, layernorm, concat gradients") {
    Rng rng(43);
    Parameter a("a", nn::init_normal(rng, 3, 5, 0.6));
    Parameter w("w", nn::init_normal(rng, 5, 4, 0.6));
    Parameter gma("g", nn::init_normal(rng, 1, 5, 0.3));
    Parameter bta("b", nn::init_normal(rng, 1, 5, 0.3));
    gma.value.array() += 1.0;

    Mat probe = nn::init_normal(rng, 3, 4, 1.0);
    check_grads({&a, &w}, [&](Graph& g) {
        // sum(softmax) alone is constant; weight it to expose the jacobian.
        Var sm = g.softmax_rows(g.matmul(g.param(a), g.param(w)));
        return g.sum_all(g.hadamard(sm, g.constant(probe)));
    });
    check_grads({&a, &gma, &bta}, [&](Graph& g) {
        Var ln = g.layernorm_rows(g.param(a), g.param(gma), g.param(bta));
        return g.sum_all(g.hadamard(ln, ln));
    });
    check_grads({&a, &w}, [&](Graph& g) {
        Var m = g.matmul(g.param(a), g.param(w));
        Var cat = g.concat_cols(g.block(m, 0, 0, 3, 2), g.tanh(m));
        return g.sum_all(g.concat_rows({cat, g.scale(cat, -0.5)}));
    });
    check_grads({&a}, [&](Graph& g) { return g.sum_all(g.transpose(g.param(a))); });
}

TEST_CASE("lookup and cross entropy gradients") {
    Rng rng(44);
    Parameter table("emb", nn::init_normal(rng, 7, 4, 0.5));
    Parameter w("w", nn::init_normal(rng, 4, 3, 0.5));
    const std::vector<int> ids{2, 5, 2, 6};
    check_grads({&table, &w}, [&](Graph& g) {
        Var x = g.lookup(table, ids);
        Var logits = g.block(g.matmul(x, g.param(w)), 0, 0, 1, 3);
        return g.cross_entropy_logits(logits, 1);
    });
}

TEST_CASE("cross entropy matches direct computation") {
    Graph g;
    Mat logits(1, 2);
    logits << 0.3, -1.1;
    Var l = g.cross_entropy_logits(g.constant(logits), 0);
    const double p0 = std::exp(0.3) / (std::exp(0.3) + std::exp(-1.1));
    CHECK(l.val()(0, 0) == doctest::Approx(-std::log(p0)).epsilon(1e-12));
}

TEST_CASE("param node is deduplicated within a graph") {
    Rng rng(45);
    Parameter a("a", nn::init_normal(rng, 2, 2, 0.5));
    Graph g;
    Var v1 = g.param(a);
    Var v2 = g.param(a);
    CHECK(v1.idx() == v2.idx());
    // Gradient through a reused node accumulates both paths.
    Var loss = g.sum_all(g.hadamard(v1, v2));
    a.zero_grad();
    g.backward(loss);
    CHECK(a.grad(0, 0) == doctest::Approx(2.0 * a.value(0, 0)));
}

TEST_CASE("adamw decoupled weight decay") {
    Parameter p("p", Mat::Constant(1, 1, 2.0));
    nn::AdamW opt({&p}, 0.1, 0.5);
    p.grad.setZero();
    opt.step();  // zero grad: only decay should act
    CHECK(p.value(0, 0) == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
}

TEST_CASE("tokenizer splits, lowercases and hashes deterministically") {
    Tokenizer tok(64);
    auto a = tok.tokenize("Hello, World! hello");
    CHECK(a.size() == 3);
    CHECK(a[0] == a[2]);
    for (int id : a) {
        CHECK(id >= kFirstWordId);
        CHECK(id < tok.table_size());
    }
    CHECK(tok.tokenize("").empty());
    CHECK(tok.tokenize("  ...  ").empty());
    CHECK(tok.tokenize("a-b") == tok.tokenize("a b"));
}

TEST_CASE("encoder output shape and determinism") {
    EncoderSpec spec;
    spec.vocab = 50;
    spec.layers = 1;
    spec.heads = 2;
    spec.dim = 16;
    spec.max_tokens = 8;
    Rng rng(7);
    TransformerEncoder enc(spec, "enc", rng);
    Tokenizer tok(spec.vocab);
    auto ids = enc.prepare_head(tok.tokenize("one two three"));
    Graph g1, g2;
    Var c1 = enc.encode_cls(g1, ids, 0.0);
    Var c2 = enc.encode_cls(g2, ids, 0.0);
    CHECK(c1.rows() == 1);
    CHECK(c1.cols() == 16);
    CHECK((c1.val() - c2.val()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("encoder truncation keeps the leading tokens") {
    EncoderSpec spec;
    spec.vocab = 100;
    spec.layers = 1;
    spec.heads = 2;
    spec.dim = 16;
    spec.max_tokens = 6;
    Rng rng(8);
    TransformerEncoder enc(spec, "enc", rng);
    std::vector<int> longseq, shortseq;
    Rng idr(3);
    for (int i = 0; i < 40; ++i) longseq.push_back(kFirstWordId + static_cast<int>(idr.uniform_int(100)));
    shortseq.assign(longseq.begin(), longseq.begin() + 5);
    Graph g1, g2;
    Mat a = enc.encode_cls(g1, enc.prepare_head(longseq), 0.0).val();
    Mat b = enc.encode_cls(g2, enc.prepare_head(shortseq), 0.0).val();
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    // Tail preparation keeps the trailing tokens instead.
    std::vector<int> tail5(longseq.end() - 5, longseq.end());
    Graph g3, g4;
    Mat c = enc.encode_cls(g3, enc.prepare_tail(longseq), 0.0).val();
    Mat d = enc.encode_cls(g4, enc.prepare_tail(tail5), 0.0).val();
    CHECK((c - d).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("encoder end-to-end gradient check") {
    EncoderSpec spec;
    spec.vocab = 12;
    spec.layers = 1;
    spec.heads = 2;
    spec.dim = 6;
    spec.max_tokens = 5;
    Rng rng(9);
    TransformerEncoder enc(spec, "enc", rng);
    Parameter head("head", nn::init_normal(rng, 6, 2, 0.4));
    const std::vector<int> ids{kClsId, 4, 9, 4};
    auto build = [&](Graph& g) {
        Var cls = enc.encode_cls(g, ids, 0.0);
        return g.cross_entropy_logits(g.matmul(cls, g.param(head)), 1);
    };
    std::vector<Parameter*> ps = enc.params();
    ps.push_back(&head);
    // Spot-check full coordinates on the small model; tolerance is loose
    // because layernorm mixes magnitudes.
    auto eval = [&] {
        Graph g;
        return build(g).val()(0, 0);
    };
    Graph g;
    Var loss = build(g);
    for (Parameter* p : ps) p->zero_grad();
    g.backward(loss);
    int checked = 0;
    for (Parameter* p : ps) {
        if (p->value.size() == 0) continue;
        // Check the largest-gradient coordinate of each tensor; finite
        // differences on near-zero gradients measure only roundoff.
        int r = 0, c = 0;
        p->grad.cwiseAbs().maxCoeff(&r, &c);
        if (std::abs(p->grad(r, c)) < 1e-7) continue;
        const double fd = fd_grad(*p, r, c, eval);
        const double an = p->grad(r, c);
        INFO(p->name, " analytic=", an, " fd=", fd);
        CHECK(grad_close(an, fd, 1e-8, 1e-4));
        ++checked;
    }
    CHECK(checked > 10);
}

TEST_CASE("dropout is off outside training and seeded inside") {
    Rng rng(10);
    Parameter a("a", nn::init_normal(rng, 4, 4, 1.0));
    Graph g;
    Var x = g.dropout(g.param(a), 0.5);
    CHECK((x.val() - a.value).cwiseAbs().maxCoeff() == 0.0);

    Rng d1(77), d2(77);
    Graph g1, g2;
    g1.set_training(&d1);
    g2.set_training(&d2);
    Mat m1 = g1.dropout(g1.param(a), 0.5).val();
    Mat m2 = g2.dropout(g2.param(a), 0.5).val();
    CHECK((m1 - m2).cwiseAbs().maxCoeff() == 0.0);
}
