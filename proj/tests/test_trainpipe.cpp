#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "amoe/checkpoint.hpp"
#include "amoe/errors.hpp"
#include "amoe/loss.hpp"
#include "amoe/model.hpp"
#include "amoe/optim.hpp"
#include "amoe/rng.hpp"
#include "amoe/trainer.hpp"

using namespace amoe;

namespace {

ModelConfig tiny_model(int vocab) {
    ModelConfig c;
    c.vocab_size = vocab;
    c.d_model = 8;
    c.n_layers = 1;
    c.n_heads = 2;
    c.max_seq = 40;
    c.adapter.dim = 8;
    c.adapter.n_experts = 2;
    c.adapter.rank = 2;
    c.adapter.alpha = 4.0;
    return c;
}

TaskConfig tiny_task() {
    TaskConfig c;
    c.n_domains = 2;
    c.objects_per_domain = 2;
    c.defect_classes = 3;
    c.seq_len = 12;
    c.n_samples = 400;
    return c;
}

}  // namespace

TEST_CASE("cross_entropy: uniform logits give ln(vocab)") {
    Tape t;
    const int v = 7;
    Node logits = t.constant(Tensor2(3, v));  // all zero -> uniform
    std::vector<int> targets = {1, 4, 6};
    Node l = cross_entropy(t, logits, targets, {true, true, true});
    CHECK(l->value.at(0, 0) == doctest::Approx(std::log(static_cast<double>(v))).epsilon(1e-12));
}

TEST_CASE("cross_entropy: near-one-hot logits give near-zero loss") {
    Tape t;
    Tensor2 lv(2, 5);
    lv.at(0, 2) = 50.0;
    lv.at(1, 0) = 50.0;
    std::vector<int> targets = {2, 0};
    Node l = cross_entropy(t, t.constant(lv), targets, {true, true});
    CHECK(l->value.at(0, 0) < 1e-12);
}

TEST_CASE("cross_entropy: random logits match direct -mean log p oracle; mask selects rows") {
    SplitMix64 g(3);
    Tensor2 lv(4, 6);
    for (std::size_t i = 0; i < lv.size(); ++i) lv.data()[i] = g.uniform(-3.0, 3.0);
    std::vector<int> targets = {5, 0, 3, 2};
    std::vector<bool> mask = {true, false, true, true};

    double expect = 0.0;
    int used = 0;
    for (int i = 0; i < 4; ++i) {
        if (!mask[i]) continue;
        double mx = lv.at(i, 0);
        for (int j = 1; j < 6; ++j) mx = std::max(mx, lv.at(i, j));
        double z = 0.0;
        for (int j = 0; j < 6; ++j) z += std::exp(lv.at(i, j) - mx);
        expect += -(lv.at(i, targets[i]) - mx - std::log(z));
        ++used;
    }
    expect /= used;

    Tape t;
    Node l = cross_entropy(t, t.constant(lv), targets, mask);
    CHECK(l->value.at(0, 0) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("cross_entropy: empty mask and bad shapes are rejected") {
    Tape t;
    Node logits = t.constant(Tensor2(2, 4));
    std::vector<int> targets = {0, 1};
    CHECK_THROWS_AS(cross_entropy(t, logits, targets, {false, false}), ContractError);
    std::vector<int> short_targets = {0};
    CHECK_THROWS(cross_entropy(t, logits, short_targets, {true, true}));
}

TEST_CASE("cross_entropy gradient matches finite differences") {
    SplitMix64 g(5);
    Tensor2 lv(3, 5);
    for (std::size_t i = 0; i < lv.size(); ++i) lv.data()[i] = g.uniform(-2.0, 2.0);
    std::vector<int> targets = {1, 4, 0};
    std::vector<bool> mask = {true, true, false};
    std::vector<Tensor2*> params = {&lv};
    auto build = [&](Tape& t, std::vector<Node>& leaves) {
        Node n = t.leaf(lv);
        leaves.push_back(n);
        return cross_entropy(t, n, targets, mask);
    };
    CHECK(grad_check(build, params, 1e-6) < 1e-7);
}

TEST_CASE("adam: zero gradient is a fixed point") {
    Param p{"p", Tensor2{{1.0, -2.0}, {0.5, 3.0}}, false};
    Adam opt({&p}, AdamConfig{});
    Tensor2 before = p.value;
    Tape t;
    p.bind(t, true);  // grad stays zero: no backward
    opt.step();
    CHECK(p.value == before);
}

TEST_CASE("adam: first step matches the bias-corrected closed form") {
    AdamConfig cfg;
    cfg.lr = 0.05;
    Param p{"p", Tensor2{{2.0, -1.0}}, false};
    Adam opt({&p}, cfg);
    Tape t;
    p.bind(t, true);
    p.node->grad = Tensor2{{0.3, -0.7}};
    Tensor2 before = p.value;
    opt.step();
    // m_hat = g, v_hat = g^2 after bias correction at t=1
    for (int j = 0; j < 2; ++j) {
        const double gj = p.node->grad.at(0, j);
        const double expect = before.at(0, j) - cfg.lr * gj / (std::sqrt(gj * gj) + cfg.eps);
        CHECK(p.value.at(0, j) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("adam: deterministic across identical runs") {
    auto run = [] {
        Param p{"p", Tensor2{{1.0, 1.0, 1.0}}, false};
        Adam opt({&p}, AdamConfig{});
        SplitMix64 g(9);
        for (int s = 0; s < 25; ++s) {
            Tape t;
            p.bind(t, true);
            for (int j = 0; j < 3; ++j) p.node->grad.at(0, j) = g.uniform(-1.0, 1.0);
            opt.step();
        }
        return p.value;
    };
    CHECK(run() == run());
}

TEST_CASE("run_stage validation and zero-work degenerate case") {
    TrainConfig bad;
    bad.steps = 0;
    CHECK_THROWS_AS(bad.validate(), ContractError);
    bad = TrainConfig{};
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("stage-2 training leaves the base digest unchanged and moves adapters") {
    TaskConfig task = tiny_task();
    VocabLayout vl(task);
    ModelConfig mc = tiny_model(vl.vocab_size);
    TinyTransformer m(mc, 3);
    auto [train, test] = gen_split(task);

    const std::uint64_t base_before = m.base_digest();
    std::vector<const Param*> adapters_before_ptrs;
    std::vector<Tensor2> adapters_before;
    for (Param* p : m.trainable_params(Stage::Stage2)) adapters_before.push_back(p->value);

    TrainConfig tc;
    tc.stage = Stage::Stage2;
    tc.steps = 12;
    tc.batch_size = 4;
    tc.eval_every = 6;
    TrainReport rep = run_stage(m, task, train, test, tc);
    CHECK(m.base_digest() == base_before);
    CHECK(rep.entries.size() == 2);
    CHECK(rep.entries.back().step == 12);

    bool moved = false;
    auto s2 = m.trainable_params(Stage::Stage2);
    for (std::size_t i = 0; i < s2.size(); ++i)
        if (!(s2[i]->value == adapters_before[i])) moved = true;
    CHECK(moved);
}

TEST_CASE("stage-1 training moves base params, keeps adapters at init, reduces loss") {
    TaskConfig task = tiny_task();
    VocabLayout vl(task);
    TinyTransformer m(tiny_model(vl.vocab_size), 3);
    auto [train, test] = gen_split(task);
    auto normals = normal_only(train);
    for (const auto& s : normals) CHECK(s.defect_id == 0);

    std::vector<Tensor2> adapters_before;
    for (Param* p : m.trainable_params(Stage::Stage2)) adapters_before.push_back(p->value);

    TrainConfig tc;
    tc.stage = Stage::Stage1;
    tc.steps = 60;
    tc.batch_size = 8;
    tc.lr = 3e-3;
    tc.eval_every = 30;
    const std::uint64_t digest_before = m.base_digest();
    TrainReport rep = run_stage(m, task, normals, test, tc);
    CHECK(m.base_digest() != digest_before);
    auto s2 = m.trainable_params(Stage::Stage2);
    for (std::size_t i = 0; i < s2.size(); ++i) CHECK(s2[i]->value == adapters_before[i]);
    CHECK(rep.entries.back().train_loss < rep.entries.front().train_loss);
}

TEST_CASE("run_stage is deterministic in (model seed, corpus, config)") {
    TaskConfig task = tiny_task();
    VocabLayout vl(task);
    auto [train, test] = gen_split(task);
    auto once = [&] {
        TinyTransformer m(tiny_model(vl.vocab_size), 5);
        TrainConfig tc;
        tc.stage = Stage::Stage2;
        tc.steps = 10;
        tc.batch_size = 4;
        tc.eval_every = 5;
        run_stage(m, task, train, test, tc);
        std::vector<const Param*> ps;
        for (Param* p : m.params()) ps.push_back(p);
        return params_digest(ps);
    };
    CHECK(once() == once());
}

TEST_CASE("checkpoint: save/load round-trips every tensor bit-exactly") {
    TaskConfig task = tiny_task();
    VocabLayout vl(task);
    TinyTransformer m(tiny_model(vl.vocab_size), 7);
    const std::string path = "trainpipe_test_ck.bin";
    save_checkpoint(path, m, "sample = config\n");
    LoadedCheckpoint ck = read_checkpoint(path);
    CHECK(ck.config_echo == "sample = config\n");
    CHECK(ck.tensors.size() == m.params().size());

    TinyTransformer m2(tiny_model(vl.vocab_size), 8);  // different init
    restore_into(m2, ck, false);
    auto pa = m.params();
    auto pb = m2.params();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
    CHECK(m.base_digest() == m2.base_digest());
    std::remove(path.c_str());
}

TEST_CASE("checkpoint: base_only restore keeps adapter values") {
    TaskConfig task = tiny_task();
    VocabLayout vl(task);
    TinyTransformer m(tiny_model(vl.vocab_size), 7);
    const std::string path = "trainpipe_test_ck2.bin";
    save_checkpoint(path, m, "");
    LoadedCheckpoint ck = read_checkpoint(path);

    TinyTransformer m2(tiny_model(vl.vocab_size), 9);
    std::vector<Tensor2> adapters_before;
    for (Param* p : m2.trainable_params(Stage::Stage2)) adapters_before.push_back(p->value);
    restore_into(m2, ck, true);
    CHECK(m2.base_digest() == m.base_digest());
    auto s2 = m2.trainable_params(Stage::Stage2);
    for (std::size_t i = 0; i < s2.size(); ++i) CHECK(s2[i]->value == adapters_before[i]);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint: corruption is rejected with descriptive errors") {
    TaskConfig task = tiny_task();
    VocabLayout vl(task);
    TinyTransformer m(tiny_model(vl.vocab_size), 7);
    const std::string path = "trainpipe_test_ck3.bin";
    save_checkpoint(path, m, "cfg");

    auto clobber = [&](long offset, const char* bytes, std::size_t n) {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(offset);
        f.write(bytes, static_cast<std::streamsize>(n));
    };

    SUBCASE("bad magic") {
        clobber(0, "NOPE", 4);
        try {
            read_checkpoint(path);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("magic") != std::string::npos);
        }
    }
    SUBCASE("unsupported version") {
        const char v2[4] = {2, 0, 0, 0};
        clobber(4, v2, 4);
        try {
            read_checkpoint(path);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("version") != std::string::npos);
        }
    }
    SUBCASE("truncated file") {
        std::ifstream in(path, std::ios::binary);
        std::vector<char> all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(all.data(), static_cast<std::streamsize>(all.size() / 2));
        out.close();
        CHECK_THROWS_AS(read_checkpoint(path), ParseError);
    }
    SUBCASE("shape mismatch on restore") {
        LoadedCheckpoint ck = read_checkpoint(path);
        ck.tensors[0].second = Tensor2(1, 1);
        CHECK_THROWS_AS(restore_into(m, ck, false), DimensionError);
    }
    std::remove(path.c_str());
}

TEST_CASE("discriminative_eval: scores only discriminative samples, bounded outputs") {
    TaskConfig task = tiny_task();
    VocabLayout vl(task);
    TinyTransformer m(tiny_model(vl.vocab_size), 11);
    auto [train, test] = gen_split(task);
    auto [acc, nll] = discriminative_eval(m, task, test, 50);
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
    CHECK(nll > 0.0);
}
