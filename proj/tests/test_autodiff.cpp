#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "amoe/autodiff.hpp"
#include "amoe/errors.hpp"
#include "amoe/rng.hpp"

using namespace amoe;

namespace {

Tensor2 random_tensor(SplitMix64& g, int rows, int cols, double lo = -1.0, double hi = 1.0) {
    Tensor2 t(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = g.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("matmul forward: identity and zero cases") {
    Tape t;
    Node m = t.leaf(Tensor2{{1.0, 2.0}, {3.0, 4.0}});
    Node eye = t.constant(Tensor2::identity(2));
    CHECK(matmul(t, eye, m)->value == m->value);

    Node z = t.constant(Tensor2(2, 2));
    CHECK(matmul(t, m, z)->value == Tensor2(2, 2));
}

TEST_CASE("matmul forward + backward vs hand oracle") {
    // [[1,2]] x [[3],[4]] = [[11]]; d/da under seed 1 = [[3,4]]
    Tape t;
    Node a = t.leaf(Tensor2{{1.0, 2.0}});
    Node b = t.leaf(Tensor2{{3.0}, {4.0}});
    Node p = matmul(t, a, b);
    CHECK(p->value.at(0, 0) == 11.0);
    t.backward(p);
    CHECK(a->grad == Tensor2{{3.0, 4.0}});
    CHECK(b->grad == Tensor2{{1.0}, {2.0}});
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tape t;
    Node a = t.leaf(Tensor2(2, 3));
    Node b = t.leaf(Tensor2(2, 3));
    CHECK_THROWS_WITH_AS(matmul(t, a, b), doctest::Contains("[2x3]"), DimensionError);
}

TEST_CASE("softmax_rows: symmetry and analytic values") {
    Tape t;
    Node a = t.leaf(Tensor2{{0.0, 0.0, 0.0}});
    Node s = softmax_rows(t, a);
    for (int j = 0; j < 3; ++j) CHECK(s->value.at(0, j) == doctest::Approx(1.0 / 3).epsilon(1e-15));

    Node b = t.leaf(Tensor2{{std::log(2.0), 0.0}});
    Node sb = softmax_rows(t, b);
    CHECK(sb->value.at(0, 0) == doctest::Approx(2.0 / 3).epsilon(1e-14));
    CHECK(sb->value.at(0, 1) == doctest::Approx(1.0 / 3).epsilon(1e-14));
}

TEST_CASE("softmax_rows: large logits do not overflow") {
    Tape t;
    Node b = t.leaf(Tensor2{{1000.0, 0.0}});
    Node s = softmax_rows(t, b);
    CHECK(s->value.all_finite());
    // exp(-1000) / (1 + exp(-1000)): indistinguishable from {1, 0} in doubles
    CHECK(s->value.at(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s->value.at(0, 1) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("softmax_rows: rows sum to 1 within 1e-12 for random input") {
    SplitMix64 g(7);
    for (int rep = 0; rep < 50; ++rep) {
        Tape t;
        const int rows = 1 + static_cast<int>(g.below(6));
        const int cols = 1 + static_cast<int>(g.below(8));
        Node s = softmax_rows(t, t.leaf(random_tensor(g, rows, cols, -1e3, 1e3)));
        for (int i = 0; i < rows; ++i) {
            double sum = 0.0;
            for (int j = 0; j < cols; ++j) {
                CHECK(s->value.at(i, j) >= 0.0);
                sum += s->value.at(i, j);
            }
            CHECK(std::fabs(sum - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("elementwise: add identity, tanh zero, mean_rows oracle") {
    Tape t;
    Node m = t.leaf(Tensor2{{1.0, -2.0}, {0.5, 3.0}});
    CHECK(add(t, m, t.constant(Tensor2(2, 2)))->value == m->value);

    Node z = t.leaf(Tensor2(2, 3));
    Node th = tanh_map(t, z);
    CHECK(th->value == Tensor2(2, 3));
    Node s = sum_all(t, th);
    t.backward(s);
    CHECK(z->grad == Tensor2::full(2, 3, 1.0));  // tanh'(0) = 1

    Tape t2;
    Node mr = mean_rows(t2, t2.leaf(Tensor2{{1.0, 3.0}, {3.0, 5.0}}));
    CHECK(mr->value == Tensor2{{2.0, 4.0}});
}

TEST_CASE("elementwise shape mismatch") {
    Tape t;
    CHECK_THROWS_AS(add(t, t.leaf(Tensor2(2, 2)), t.leaf(Tensor2(2, 3))), DimensionError);
    CHECK_THROWS_AS(hadamard(t, t.leaf(Tensor2(1, 2)), t.leaf(Tensor2(2, 1))), DimensionError);
}

TEST_CASE("backward: sum of leaves gives exact ones; fan-out accumulates") {
    Tape t;
    Node m = t.leaf(Tensor2{{1.0, 2.0}, {3.0, 4.0}});
    t.backward(sum_all(t, m));
    CHECK(m->grad == Tensor2::full(2, 2, 1.0));

    Tape t2;
    Node m2 = t2.leaf(Tensor2{{1.0, 2.0}});
    t2.backward(sum_all(t2, add(t2, m2, m2)));
    CHECK(m2->grad == Tensor2::full(1, 2, 2.0));
}

TEST_CASE("backward: sum of softmax rows has zero gradient") {
    Tape t;
    SplitMix64 g(3);
    Node x = t.leaf(random_tensor(g, 3, 4));
    t.backward(sum_all(t, softmax_rows(t, x)));
    for (std::size_t i = 0; i < x->grad.size(); ++i)
        CHECK(std::fabs(x->grad.data()[i]) < 1e-12);
}

TEST_CASE("backward requires a scalar root") {
    Tape t;
    Node m = t.leaf(Tensor2(2, 2));
    CHECK_THROWS_AS(t.backward(m), ContractError);
}

TEST_CASE("leaf parameters reject NaN/Inf") {
    Tape t;
    Tensor2 bad{{1.0, std::nan("")}};
    CHECK_THROWS_AS(t.leaf(bad), ContractError);
}

TEST_CASE("requires_grad=false leaves never accumulate gradient") {
    Tape t;
    Node c = t.constant(Tensor2{{2.0, 2.0}});
    Node m = t.leaf(Tensor2{{1.0, 1.0}});
    t.backward(sum_all(t, hadamard(t, m, c)));
    CHECK(c->grad == Tensor2(1, 2));
    CHECK(m->grad == Tensor2{{2.0, 2.0}});
}

TEST_CASE("output shapes are a pure function of input shapes") {
    SplitMix64 g(11);
    for (int rep = 0; rep < 30; ++rep) {
        const int m = 1 + static_cast<int>(g.below(5));
        const int k = 1 + static_cast<int>(g.below(5));
        const int n = 1 + static_cast<int>(g.below(5));
        Tape t;
        Node a = t.leaf(random_tensor(g, m, k));
        Node b = t.leaf(random_tensor(g, k, n));
        Node p = matmul(t, a, b);
        CHECK(p->value.rows() == m);
        CHECK(p->value.cols() == n);
        Node tr = transpose(t, p);
        CHECK(tr->value.rows() == n);
        CHECK(tr->value.cols() == m);
        CHECK(mean_rows(t, p)->value.rows() == 1);
        CHECK(concat_cols(t, {p, p})->value.cols() == 2 * n);
        CHECK(slice_cols(t, p, 0, 1)->value.cols() == 1);
    }
}

TEST_CASE("grad_check: exact linear gradient") {
    Tensor2 m{{0.3, -1.2}, {2.0, 0.7}};
    auto build = [&](Tape& t, std::vector<Node>& leaves) {
        Node n = t.leaf(m);
        leaves.push_back(n);
        return sum_all(t, n);
    };
    CHECK(grad_check(build, {&m}, 1e-6) < 1e-9);
}

TEST_CASE("grad_check: eps = 0 is rejected") {
    Tensor2 m(1, 1);
    auto build = [&](Tape& t, std::vector<Node>& leaves) {
        Node n = t.leaf(m);
        leaves.push_back(n);
        return sum_all(t, n);
    };
    CHECK_THROWS_AS(grad_check(build, {&m}, 0.0), ContractError);
}

TEST_CASE("grad_check: composite of the whole op set stays under 1e-5") {
    SplitMix64 g(17);
    Tensor2 a = random_tensor(g, 3, 4);
    Tensor2 b = random_tensor(g, 4, 4);
    Tensor2 gain = random_tensor(g, 1, 4, 0.5, 1.5);
    Tensor2 bias = random_tensor(g, 1, 4);
    Tensor2 col = random_tensor(g, 3, 1);
    auto build = [&](Tape& t, std::vector<Node>& leaves) {
        Node na = t.leaf(a);
        Node nb = t.leaf(b);
        Node ng = t.leaf(gain);
        Node nbias = t.leaf(bias);
        Node ncol = t.leaf(col);
        leaves.assign({na, nb, ng, nbias, ncol});
        Node h = tanh_map(t, matmul(t, na, nb));
        h = layernorm_rows(t, h, ng, nbias);
        h = scale_rows(t, softmax_rows(t, h), ncol);
        h = add_rowvec(t, h, mean_rows(t, h));
        h = hadamard(t, h, sub(t, h, na));
        return sum_all(t, scale(t, h, 0.37));
    };
    CHECK(grad_check(build, {&a, &b, &gain, &bias, &col}, 1e-6) < 1e-5);
}

TEST_CASE("embed_rows gathers and scatter-adds") {
    Tape t;
    Node table = t.leaf(Tensor2{{1.0, 2.0}, {3.0, 4.0}, {5.0, 6.0}});
    Node e = embed_rows(t, table, {2, 0, 2});
    CHECK(e->value == Tensor2{{5.0, 6.0}, {1.0, 2.0}, {5.0, 6.0}});
    t.backward(sum_all(t, e));
    CHECK(table->grad == Tensor2{{1.0, 1.0}, {0.0, 0.0}, {2.0, 2.0}});
}
