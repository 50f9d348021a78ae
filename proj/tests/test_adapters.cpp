#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "amoe/adapters.hpp"
#include "amoe/errors.hpp"
#include "amoe/rng.hpp"

using namespace amoe;

namespace {

Tensor2 random_tensor(SplitMix64& g, int rows, int cols, double lo = -1.0, double hi = 1.0) {
    Tensor2 t(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = g.uniform(lo, hi);
    return t;
}

Param* find_param(AmoeLoraAdapter& a, const std::string& suffix) {
    std::vector<Param*> ps;
    a.collect(ps);
    for (Param* p : ps)
        if (p->name.size() >= suffix.size() &&
            p->name.compare(p->name.size() - suffix.size(), suffix.size(), suffix) == 0)
            return p;
    return nullptr;
}

void randomize_b_sides(AmoeLoraAdapter& a, std::uint64_t seed) {
    std::vector<Param*> ps;
    a.collect(ps);
    SplitMix64 g(seed);
    for (Param* p : ps)
        if (p->name.ends_with(".B") || p->name.ends_with(".Wb"))
            p->value = random_tensor(g, p->value.rows(), p->value.cols());
}

void zero_hypernetwork(AmoeLoraAdapter& a) {
    std::vector<Param*> ps;
    a.collect(ps);
    for (Param* p : ps)
        if (p->name.find(".hyper_") != std::string::npos) p->value.fill(0.0);
}

AdapterConfig small_cfg(AdapterVariant v, int d = 6, int n = 3, int r = 2, double alpha = 4.0) {
    AdapterConfig c;
    c.dim = d;
    c.n_experts = n;
    c.rank = r;
    c.alpha = alpha;
    c.variant = v;
    return c;
}

}  // namespace

TEST_CASE("route: zero router weights give uniform rows; N=1 gives exactly 1") {
    AmoeLoraAdapter a(small_cfg(AdapterVariant::MoeOnly, 4, 3, 2), "ad", 1);
    find_param(a, ".router.Wg")->value.fill(0.0);
    Tape t;
    a.bind(t, false);
    SplitMix64 g(5);
    Node w = a.route(t, t.leaf(random_tensor(g, 5, 4)));
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 3; ++j) CHECK(w->value.at(i, j) == doctest::Approx(1.0 / 3).epsilon(1e-15));

    AmoeLoraAdapter b(small_cfg(AdapterVariant::MoeOnly, 4, 1, 2), "ad", 1);
    Tape t2;
    b.bind(t2, false);
    Node w2 = b.route(t2, t2.leaf(random_tensor(g, 3, 4)));
    for (int i = 0; i < 3; ++i) CHECK(w2->value.at(i, 0) == 1.0);
}

TEST_CASE("route: rows sum to 1 within 1e-12 on random input") {
    SplitMix64 g(9);
    AmoeLoraAdapter a(small_cfg(AdapterVariant::Full, 8, 3, 2), "ad", 2);
    for (int rep = 0; rep < 50; ++rep) {
        Tape t;
        a.bind(t, false);
        Node w = a.route(t, t.leaf(random_tensor(g, 4, 8, -10.0, 10.0)));
        for (int i = 0; i < 4; ++i) {
            double sum = 0.0;
            for (int j = 0; j < 3; ++j) {
                CHECK(w->value.at(i, j) >= 0.0);
                sum += w->value.at(i, j);
            }
            CHECK(std::fabs(sum - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("expert_forward: zero-init B silences the expert") {
    AmoeLoraAdapter a(small_cfg(AdapterVariant::MoeOnly, 4, 2, 2), "ad", 3);
    Tape t;
    a.bind(t, false);
    SplitMix64 g(1);
    Node out = a.expert_forward(t, 0, t.leaf(random_tensor(g, 3, 4)));
    CHECK(out->value == Tensor2(3, 4));
}

TEST_CASE("expert_forward: hand matrix-multiply oracle") {
    AmoeLoraAdapter a(small_cfg(AdapterVariant::MoeOnly, 2, 1, 1), "ad", 3);
    find_param(a, ".expert0.A")->value = Tensor2{{1.0, 1.0}};       // r x d
    find_param(a, ".expert0.B")->value = Tensor2{{1.0}, {0.0}};     // d x r
    Tape t;
    a.bind(t, false);
    Node out = a.expert_forward(t, 0, t.leaf(Tensor2{{1.0, 2.0}}));
    CHECK(out->value == Tensor2{{3.0, 0.0}});
}

TEST_CASE("expert_forward: identity factors with r=d reproduce x") {
    AmoeLoraAdapter a(small_cfg(AdapterVariant::MoeOnly, 3, 1, 3), "ad", 3);
    find_param(a, ".expert0.A")->value = Tensor2::identity(3);
    find_param(a, ".expert0.B")->value = Tensor2::identity(3);
    Tape t;
    a.bind(t, false);
    SplitMix64 g(2);
    Tensor2 x = random_tensor(g, 4, 3);
    Node out = a.expert_forward(t, 0, t.leaf(x));
    CHECK(out->value == x);
}

TEST_CASE("generalist_forward: zero-init, N=1 reduction, identical-expert convexity") {
    SplitMix64 g(4);
    const Tensor2 x = random_tensor(g, 5, 6);

    AmoeLoraAdapter fresh(small_cfg(AdapterVariant::MoeOnly), "ad", 5);
    Tape t0;
    fresh.bind(t0, false);
    CHECK(fresh.generalist_forward(t0, t0.leaf(x))->value == Tensor2(5, 6));

    // N=1: router weight is 1, so o1 = (alpha/r) * expert(x)
    AmoeLoraAdapter one(small_cfg(AdapterVariant::MoeOnly, 6, 1, 2), "ad", 5);
    randomize_b_sides(one, 77);
    Tape t1;
    one.bind(t1, false);
    Node xo = t1.leaf(x);
    Node o1 = one.generalist_forward(t1, xo);
    Node expected = scale(t1, one.expert_forward(t1, 0, xo), one.config().alpha / one.config().rank);
    CHECK(o1->value.max_abs_diff(expected->value) < 1e-14);

    // N=2 identical experts: weights sum to 1, result equals the N=1 case
    AmoeLoraAdapter two(small_cfg(AdapterVariant::MoeOnly, 6, 2, 2), "ad", 5);
    find_param(two, ".expert0.A")->value = find_param(one, ".expert0.A")->value;
    find_param(two, ".expert0.B")->value = find_param(one, ".expert0.B")->value;
    find_param(two, ".expert1.A")->value = find_param(one, ".expert0.A")->value;
    find_param(two, ".expert1.B")->value = find_param(one, ".expert0.B")->value;
    Tape t2;
    two.bind(t2, false);
    Node o2 = two.generalist_forward(t2, t2.leaf(x));
    CHECK(o2->value.max_abs_diff(o1->value) < 1e-12);
}

TEST_CASE("hyper_core: zero network, constant network, input sensitivity") {
    AmoeLoraAdapter a(small_cfg(AdapterVariant::Full, 4, 2, 2), "ad", 6);
    SplitMix64 g(8);

    SUBCASE("all weights and biases zero -> u = v = 0") {
        zero_hypernetwork(a);
        Tape t;
        a.bind(t, false);
        auto [u, v] = a.hyper_core(t, t.leaf(random_tensor(g, 1, 4)));
        CHECK(u->value == Tensor2(1, 4));
        CHECK(v->value == Tensor2(1, 4));
    }

    SUBCASE("zero hidden weights + output bias -> constant output") {
        zero_hypernetwork(a);
        Tensor2 bias{{0.5, -1.0, 2.0, 0.25}};
        find_param(a, ".hyper_u.b2")->value = bias;
        Tape t;
        a.bind(t, false);
        auto [u1, v1] = a.hyper_core(t, t.leaf(random_tensor(g, 1, 4)));
        auto [u2, v2] = a.hyper_core(t, t.leaf(random_tensor(g, 1, 4)));
        CHECK(u1->value == bias);
        CHECK(u2->value == bias);
    }

    SUBCASE("random params: different conditioning gives different output") {
        Tape t;
        a.bind(t, false);
        auto [u1, v1] = a.hyper_core(t, t.leaf(random_tensor(g, 1, 4)));
        auto [u2, v2] = a.hyper_core(t, t.leaf(random_tensor(g, 1, 4)));
        CHECK(u1->value.max_abs_diff(u2->value) > 0.0);
    }
}

TEST_CASE("anomaly_forward: zero-init and rank-1 collapse give exact zero") {
    SplitMix64 g(10);
    AmoeLoraAdapter a(small_cfg(AdapterVariant::Full, 4, 2, 2), "ad", 7);
    Tape t;
    a.bind(t, false);
    Node x = t.leaf(random_tensor(g, 3, 4));
    Node c = mean_rows(t, x);
    CHECK(a.anomaly_forward(t, x, c).o2->value == Tensor2(3, 4));  // Wb = 0

    AmoeLoraAdapter b(small_cfg(AdapterVariant::Full, 4, 2, 2), "ad", 7);
    randomize_b_sides(b, 3);
    zero_hypernetwork(b);  // u = v = 0
    Tape t2;
    b.bind(t2, false);
    Node x2 = t2.leaf(random_tensor(g, 3, 4));
    CHECK(b.anomaly_forward(t2, x2, mean_rows(t2, x2)).o2->value == Tensor2(3, 4));
}

TEST_CASE("anomaly_forward: materialized-H hand oracle (d=2, r=1)") {
    AmoeLoraAdapter a(small_cfg(AdapterVariant::Full, 2, 1, 1, 1.0), "ad", 8);
    zero_hypernetwork(a);
    find_param(a, ".hyper_u.b2")->value = Tensor2{{1.0, 0.0}};  // u
    find_param(a, ".hyper_v.b2")->value = Tensor2{{0.0, 1.0}};  // v
    find_param(a, ".Wa")->value = Tensor2{{1.0, 0.0}};
    find_param(a, ".Wb")->value = Tensor2{{0.0}, {1.0}};
    Tape t;
    a.bind(t, false);
    Node x = t.leaf(Tensor2{{3.0, 4.0}});
    auto out = a.anomaly_forward(t, x, mean_rows(t, x));
    // H = u^T v = [[0,1],[0,0]]; A0 = Wa H = [[0,1]]; B0 = H Wb = [[1],[0]]
    // x A0^T B0^T = [4] * [[1,0]] = [[4,0]]
    CHECK(out.o2->value == Tensor2{{4.0, 0.0}});
    CHECK(out.factors.a0 == Tensor2{{0.0, 1.0}});
    CHECK(out.factors.b0 == Tensor2{{1.0}, {0.0}});
}

TEST_CASE("anomaly_forward equals brute-force materialized H within 1e-10") {
    SplitMix64 g(12);
    for (int d : {4, 9, 16}) {
        AdapterConfig cfg = small_cfg(AdapterVariant::Full, d, 2, 3, 8.0);
        cfg.hyper_rank = d >= 9 ? 2 : 1;  // exercise the rank-k option
        AmoeLoraAdapter a(cfg, "ad", static_cast<std::uint64_t>(d));
        randomize_b_sides(a, static_cast<std::uint64_t>(d) + 100);
        Tape t;
        a.bind(t, false);
        Node x = t.leaf(random_tensor(g, 5, d));
        Node c = mean_rows(t, x);
        auto out = a.anomaly_forward(t, x, c);

        // brute force: H = u^T v as a dense d x d matrix, then B0 A0 x directly
        auto [u, v] = a.hyper_core(t, c);
        Tensor2 h;
        mm_tn(u->value, v->value, h);  // d x d
        Tensor2 a0, b0, xa, oracle;
        mm_nn(find_param(a, ".Wa")->value, h, a0);
        mm_nn(h, find_param(a, ".Wb")->value, b0);
        mm_nt(x->value, a0, xa);
        mm_nt(xa, b0, oracle);
        const double s = cfg.alpha / cfg.rank;
        for (std::size_t i = 0; i < oracle.size(); ++i) oracle.data()[i] *= s;
        CHECK(out.o2->value.max_abs_diff(oracle) < 1e-10);
    }
}

TEST_CASE("amoe_forward: zero-init transparency is bitwise for every variant") {
    SplitMix64 g(14);
    for (AdapterVariant v : {AdapterVariant::LoraOnly, AdapterVariant::MoeOnly, AdapterVariant::Full}) {
        AmoeLoraAdapter a(small_cfg(v), "ad", 15);
        Tape t;
        a.bind(t, false);
        Tensor2 o0v = random_tensor(g, 4, 6);
        Node out = a.forward(t, t.leaf(o0v), t.leaf(random_tensor(g, 4, 6)));
        CHECK(out->value == o0v);
    }
}

TEST_CASE("amoe_forward: full with zeroed hypernetwork equals moe variant exactly") {
    SplitMix64 g(16);
    AmoeLoraAdapter full(small_cfg(AdapterVariant::Full), "ad", 21);
    AmoeLoraAdapter moe(small_cfg(AdapterVariant::MoeOnly), "ad", 21);  // same name streams
    randomize_b_sides(full, 9);
    randomize_b_sides(moe, 9);
    zero_hypernetwork(full);
    Tensor2 o0v = random_tensor(g, 5, 6);
    Tensor2 xv = random_tensor(g, 5, 6);
    Tape t1, t2;
    full.bind(t1, false);
    moe.bind(t2, false);
    Node a = full.forward(t1, t1.leaf(o0v), t1.leaf(xv));
    Node b = moe.forward(t2, t2.leaf(o0v), t2.leaf(xv));
    CHECK(a->value == b->value);
}

TEST_CASE("amoe_forward: doubling alpha exactly doubles (output - o0)") {
    SplitMix64 g(18);
    AdapterConfig c1 = small_cfg(AdapterVariant::Full, 6, 3, 2, 16.0);
    AdapterConfig c2 = c1;
    c2.alpha = 32.0;
    AmoeLoraAdapter a1(c1, "ad", 30);
    AmoeLoraAdapter a2(c2, "ad", 30);
    randomize_b_sides(a1, 44);
    randomize_b_sides(a2, 44);
    Tensor2 o0v = random_tensor(g, 4, 6);
    Tensor2 xv = random_tensor(g, 4, 6);
    Tape t1, t2;
    a1.bind(t1, false);
    a2.bind(t2, false);
    Node y1 = a1.forward(t1, t1.leaf(o0v), t1.leaf(xv));
    Node y2 = a2.forward(t2, t2.leaf(o0v), t2.leaf(xv));
    for (std::size_t i = 0; i < y1->value.size(); ++i) {
        const double d1 = y1->value.data()[i] - o0v.data()[i];
        const double d2 = y2->value.data()[i] - o0v.data()[i];
        CHECK(std::fabs(d2 - 2.0 * d1) <= 1e-12 * std::max(1.0, std::fabs(d2)));
    }
}

TEST_CASE("N=1 + zeroed hypernetwork equals an independent plain-LoRA oracle") {
    SplitMix64 g(20);
    AmoeLoraAdapter a(small_cfg(AdapterVariant::Full, 8, 1, 3, 12.0), "ad", 31);
    randomize_b_sides(a, 55);
    zero_hypernetwork(a);
    const Tensor2& av = find_param(a, ".expert0.A")->value;  // r x d
    const Tensor2& bv = find_param(a, ".expert0.B")->value;  // d x r
    for (int rep = 0; rep < 20; ++rep) {
        Tensor2 o0v = random_tensor(g, 4, 8);
        Tensor2 xv = random_tensor(g, 4, 8);
        Tape t;
        a.bind(t, false);
        Node out = a.forward(t, t.leaf(o0v), t.leaf(xv));

        // independent oracle: o0 + (alpha/r) x A^T B^T via raw kernels
        Tensor2 xa, xab;
        mm_nt(xv, av, xa);
        mm_nt(xa, bv, xab);
        Tensor2 oracle = o0v;
        oracle.add_scaled(xab, 12.0 / 3.0);
        CHECK(out->value.max_abs_diff(oracle) < 1e-12);
    }
}

TEST_CASE("extract_generated_params: determinism, constancy, shape") {
    AmoeLoraAdapter a(small_cfg(AdapterVariant::Full, 5, 2, 2), "ad", 40);
    randomize_b_sides(a, 17);
    SplitMix64 g(22);
    Tensor2 c1 = random_tensor(g, 1, 5);
    Tensor2 c2 = random_tensor(g, 1, 5);
    Tensor2 rows = a.extract_generated_params({c1, c2, c1});
    CHECK(rows.rows() == 3);
    CHECK(rows.cols() == 2 * 2 * 5);
    for (int j = 0; j < rows.cols(); ++j) CHECK(rows.at(0, j) == rows.at(2, j));

    zero_hypernetwork(a);
    find_param(a, ".hyper_u.b2")->value = Tensor2::full(1, 5, 0.3);
    find_param(a, ".hyper_v.b2")->value = Tensor2::full(1, 5, -0.2);
    Tensor2 constant_rows = a.extract_generated_params({c1, c2});
    for (int j = 0; j < constant_rows.cols(); ++j)
        CHECK(constant_rows.at(0, j) == constant_rows.at(1, j));
}

TEST_CASE("extract_generated_params rejects non-full variants") {
    AmoeLoraAdapter a(small_cfg(AdapterVariant::LoraOnly), "ad", 41);
    CHECK_THROWS_AS(a.extract_generated_params({Tensor2(1, 6)}), ContractError);
}

TEST_CASE("all adapter parameters pass grad_check below 1e-5") {
    AmoeLoraAdapter a(small_cfg(AdapterVariant::Full, 6, 3, 2, 4.0), "ad", 50);
    randomize_b_sides(a, 61);
    {
        // The hypernetwork biases start at zero, which leaves u and v (and so
        // every anomaly-branch gradient) near the finite-difference noise
        // floor. Randomize them so the check exercises O(1) gradients.
        std::vector<Param*> ps;
        a.collect(ps);
        SplitMix64 bg(71);
        for (Param* p : ps)
            if (p->name.ends_with(".b1") || p->name.ends_with(".b2"))
                p->value = random_tensor(bg, p->value.rows(), p->value.cols());
    }
    SplitMix64 g(24);
    Tensor2 o0v = random_tensor(g, 3, 6);
    Tensor2 xv = random_tensor(g, 3, 6);

    std::vector<Param*> ps;
    a.collect(ps);
    std::vector<Tensor2*> values;
    for (Param* p : ps) values.push_back(&p->value);

    auto build = [&](Tape& t, std::vector<Node>& leaves) {
        a.bind(t, true);
        for (Param* p : ps) leaves.push_back(p->node);
        Node out = a.forward(t, t.constant(o0v), t.constant(xv));
        return sum_all(t, hadamard(t, out, out));
    };
    CHECK(grad_check(build, values, 1e-5) < 1e-5);
}
