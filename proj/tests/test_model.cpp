#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "visitgen/model.hpp"
#include "visitgen/reframe.hpp"
#include "visitgen/synth.hpp"
#include "visitgen/train.hpp"

using namespace visitgen;
using model::ModelConfig;
using model::ModelInstance;
using model::Variant;
using model::VisitModel;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.n_layers = 1;
    c.n_heads = 2;
    c.ff_dim = 8;
    c.gmm_components = 2;
    c.dropout = 0.0;
    c.enc.s2v_scales = 2;
    c.enc.s2v_max = 1000.0;
    c.enc.t2v_dim = 4;
    c.enc.region_emb_dim = 6;
    c.max_seq_len = 64;
    return c;  // model_dim = 8 + 8 + 6 = 22, 22 % 2 == 0
}

// A vocabulary with a handful of known cells.
RegionVocabulary tiny_vocab() {
    std::vector<CellIndex> cells;
    for (int i = 0; i < 7; ++i) cells.push_back(CellIndex{i, 0});
    return RegionVocabulary::from_cells(cells, 100.0);
}

VisitSequence tiny_sequence(const RegionVocabulary& vocab, int n, std::uint64_t seed = 7) {
    Rng rng(seed);
    VisitSequence s;
    s.agent = "a";
    Timestamp t = 0;
    for (int i = 0; i < n; ++i) {
        Visit v;
        v.region = static_cast<RegionId>(rng.below(7));
        v.arrival = t + static_cast<Timestamp>(60 + rng.below(3600));
        v.departure = v.arrival + static_cast<Timestamp>(600 + rng.below(7200));
        v.location = vocab.cell_center(v.region);
        s.visits.push_back(v);
        t = v.departure;
    }
    return s;
}

Matrix forward_H(VisitModel& m, const ModelInstance& in) {
    ag::Tape tape;
    nn::BoundParams P(tape, m.store());
    return tape.val(m.encode(tape, P, in, nn::DropoutCtx{}));
}

struct FullOut {
    Matrix H, logits, tw, tm, ts, dw, dm, ds;
};

FullOut forward_all(VisitModel& m, const ModelInstance& in) {
    ag::Tape tape;
    nn::BoundParams P(tape, m.store());
    const model::ForwardVars fw = m.forward(tape, P, in, nn::DropoutCtx{});
    FullOut out;
    out.H = tape.val(fw.H);
    out.logits = tape.val(fw.region_logits);
    if (m.variant() == Variant::Regression) {
        out.tm = tape.val(fw.travel.mu);
        out.dm = tape.val(fw.duration.mu);
    } else {
        out.tw = tape.val(fw.travel.weights);
        out.tm = tape.val(fw.travel.mu);
        out.ts = tape.val(fw.travel.sigma);
        out.dw = tape.val(fw.duration.weights);
        out.dm = tape.val(fw.duration.mu);
        out.ds = tape.val(fw.duration.sigma);
    }
    return out;
}

bool rows_equal(const Matrix& a, const Matrix& b, int row) {
    for (int c = 0; c < a.cols; ++c)
        if (a(row, c) != b(row, c)) return false;
    return true;
}

}  // namespace

TEST_CASE("config validation enforces divisibility") {
    ModelConfig c = tiny_config();
    CHECK_NOTHROW(c.validate());
    c.n_heads = 4;  // 22 % 4 != 0
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_NOTHROW(ModelConfig::geolife().validate());
    CHECK_NOTHROW(ModelConfig::mobilitysim().validate());
    CHECK_NOTHROW(ModelConfig::desk().validate());
}

TEST_CASE("forward shapes and determinism") {
    const RegionVocabulary vocab = tiny_vocab();
    VisitModel m(tiny_config(), Variant::Full, vocab.size(), 0);
    TimeScaling scaling;
    const VisitSequence s = tiny_sequence(vocab, 8);
    const ModelInstance in =
        model::build_instance(train::tokens_from_sequence(s), vocab, scaling);

    const FullOut a = forward_all(m, in);
    const FullOut b = forward_all(m, in);
    CHECK(a.H.rows == 8);
    CHECK(a.H.cols == m.config().model_dim());
    CHECK(a.logits.rows == 8);
    CHECK(a.logits.cols == vocab.size());
    CHECK(a.tw.rows == 7);
    CHECK(a.tw.cols == 2);
    CHECK(a.H.a == b.H.a);           // bit-stable repeat
    CHECK(a.logits.a == b.logits.a);
    CHECK(a.tm.a == b.tm.a);

    // Region head emits a proper distribution per position.
    for (int r = 0; r < a.logits.rows; ++r) {
        double mx = a.logits(r, 0);
        for (int c = 0; c < a.logits.cols; ++c) mx = std::max(mx, a.logits(r, c));
        double z = 0.0;
        for (int c = 0; c < a.logits.cols; ++c) z += std::exp(a.logits(r, c) - mx);
        double sum = 0.0;
        for (int c = 0; c < a.logits.cols; ++c) sum += std::exp(a.logits(r, c) - mx) / z;
        CHECK(sum == Catch::Approx(1.0).epsilon(1e-9));
    }

    // Mixture heads: weights on the simplex, scales floored.
    for (int r = 0; r < a.tw.rows; ++r) {
        CHECK(a.tw(r, 0) + a.tw(r, 1) == Catch::Approx(1.0).epsilon(1e-9));
        CHECK(a.ts(r, 0) >= gmm::kPositivityEps);
        CHECK(a.ds(r, 1) >= gmm::kPositivityEps);
    }
}

TEST_CASE("causality: later tokens never affect earlier outputs") {
    const RegionVocabulary vocab = tiny_vocab();
    VisitModel m(tiny_config(), Variant::Full, vocab.size(), 3);
    TimeScaling scaling;
    const VisitSequence s = tiny_sequence(vocab, 10);

    const ModelInstance base =
        model::build_instance(train::tokens_from_sequence(s), vocab, scaling);
    const FullOut a = forward_all(m, base);

    for (int j : {4, 7, 9}) {
        VisitSequence mod = s;
        mod.visits[static_cast<std::size_t>(j)].region =
            (mod.visits[static_cast<std::size_t>(j)].region + 3) % 7;
        mod.visits[static_cast<std::size_t>(j)].location =
            vocab.cell_center(mod.visits[static_cast<std::size_t>(j)].region);
        mod.visits[static_cast<std::size_t>(j)].departure += 600;
        if (j + 1 < 10)
            mod.visits[static_cast<std::size_t>(j + 1)].arrival += 600;
        const ModelInstance per =
            model::build_instance(train::tokens_from_sequence(mod), vocab, scaling);
        const FullOut b = forward_all(m, per);

        for (int i = 0; i < j; ++i) {
            CHECK(rows_equal(a.H, b.H, i));
            CHECK(rows_equal(a.logits, b.logits, i));
        }
        // Temporal params for target p depend only on tokens < p plus the
        // teacher-forced attributes of p itself; perturbing token j leaves
        // all targets p < j untouched (head row p-1).
        for (int p = 1; p < j; ++p) {
            CHECK(rows_equal(a.tm, b.tm, p - 1));
            CHECK(rows_equal(a.dm, b.dm, p - 1));
        }
    }
}

TEST_CASE("an all-PAD suffix leaves prefix outputs unchanged") {
    const RegionVocabulary vocab = tiny_vocab();
    VisitModel m(tiny_config(), Variant::Full, vocab.size(), 5);
    TimeScaling scaling;
    const VisitSequence s = tiny_sequence(vocab, 6);

    auto tokens = train::tokens_from_sequence(s);
    const ModelInstance plain = model::build_instance(tokens, vocab, scaling);
    auto padded_tokens = tokens;
    for (int i = 0; i < 3; ++i) padded_tokens.push_back(Token::special(TokenKind::Pad));
    const ModelInstance padded = model::build_instance(padded_tokens, vocab, scaling);

    const Matrix H0 = forward_H(m, plain);
    const Matrix H1 = forward_H(m, padded);
    for (int i = 0; i < H0.rows; ++i)
        for (int c = 0; c < H0.cols; ++c) CHECK(H0(i, c) == H1(i, c));

    // PAD targets never enter the loss denominator.
    ag::Tape tape;
    nn::BoundParams P(tape, m.store());
    const auto lb = m.joint_nll_loss(tape, P, padded, nn::DropoutCtx{});
    CHECK(lb.count == double(plain.n_targets()));
}

TEST_CASE("degenerate region head collapses to its bias") {
    const RegionVocabulary vocab = tiny_vocab();
    VisitModel m(tiny_config(), Variant::Full, vocab.size(), 1);
    TimeScaling scaling;
    Matrix& w = m.store().at("regionhead.out.w");
    for (double& v : w.a) v = 0.0;
    Matrix& b = m.store().at("regionhead.out.b");
    for (int c = 0; c < b.cols; ++c) b(0, c) = 0.1 * c;

    const VisitSequence s = tiny_sequence(vocab, 5);
    const ModelInstance in =
        model::build_instance(train::tokens_from_sequence(s), vocab, scaling);
    const FullOut out = forward_all(m, in);
    for (int r = 0; r < out.logits.rows; ++r)
        for (int c = 0; c < out.logits.cols; ++c)
            CHECK(out.logits(r, c) == Catch::Approx(0.1 * c).epsilon(1e-12));
}

TEST_CASE("degenerate temporal head emits positive_params of its bias") {
    const RegionVocabulary vocab = tiny_vocab();
    VisitModel m(tiny_config(), Variant::Full, vocab.size(), 1);
    TimeScaling scaling;
    Matrix& w = m.store().at("travel.out.w");
    for (double& v : w.a) v = 0.0;
    Matrix& b = m.store().at("travel.out.b");
    for (int c = 0; c < b.cols; ++c) b(0, c) = 0.25 * c - 0.5;

    const VisitSequence s = tiny_sequence(vocab, 5);
    const ModelInstance in =
        model::build_instance(train::tokens_from_sequence(s), vocab, scaling);
    const FullOut out = forward_all(m, in);
    const auto expected =
        gmm::positive_params(std::vector<double>(b.row(0), b.row(0) + b.cols));
    for (int r = 0; r < out.tw.rows; ++r)
        for (int k = 0; k < 2; ++k) {
            CHECK(out.tw(r, k) == Catch::Approx(expected.weights[k]).epsilon(1e-12));
            CHECK(out.tm(r, k) == Catch::Approx(expected.means[k]).epsilon(1e-12));
            CHECK(out.ts(r, k) == Catch::Approx(expected.scales[k]).epsilon(1e-12));
        }
}

TEST_CASE("argmax region is invariant to positive scaling of the output map") {
    const RegionVocabulary vocab = tiny_vocab();
    VisitModel m(tiny_config(), Variant::Full, vocab.size(), 11);
    TimeScaling scaling;
    const VisitSequence s = tiny_sequence(vocab, 6);
    const ModelInstance in =
        model::build_instance(train::tokens_from_sequence(s), vocab, scaling);
    const FullOut a = forward_all(m, in);
    for (double* v = m.store().at("regionhead.out.w").a.data();
         v != m.store().at("regionhead.out.w").a.data() +
                  m.store().at("regionhead.out.w").a.size();
         ++v)
        *v *= 3.5;
    for (double& v : m.store().at("regionhead.out.b").a) v *= 3.5;
    const FullOut b = forward_all(m, in);
    for (int r = 0; r < a.logits.rows; ++r) {
        int arg_a = 0, arg_b = 0;
        for (int c = 0; c < a.logits.cols; ++c) {
            if (a.logits(r, c) > a.logits(r, arg_a)) arg_a = c;
            if (b.logits(r, c) > b.logits(r, arg_b)) arg_b = c;
        }
        CHECK(arg_a == arg_b);
    }
}

TEST_CASE("special-only targets carry no temporal terms") {
    const RegionVocabulary vocab = tiny_vocab();
    VisitModel m(tiny_config(), Variant::Full, vocab.size(), 2);
    TimeScaling scaling;

    // [visit, SEP]: the single target is the SEP special token.
    const VisitSequence s = tiny_sequence(vocab, 1);
    std::vector<Token> tokens = train::tokens_from_sequence(s);
    tokens.push_back(Token::special(TokenKind::Sep));
    const ModelInstance in = model::build_instance(tokens, vocab, scaling);

    // Uniform region head: loss must be exactly log V with no temporal part.
    for (double& v : m.store().at("regionhead.out.w").a) v = 0.0;
    for (double& v : m.store().at("regionhead.out.b").a) v = 0.0;
    ag::Tape tape;
    nn::BoundParams P(tape, m.store());
    const auto lb = m.joint_nll_loss(tape, P, in, nn::DropoutCtx{});
    CHECK(lb.count == 1.0);
    CHECK(tape.val(lb.total)(0, 0) ==
          Catch::Approx(std::log(double(vocab.size()))).epsilon(1e-12));
}

TEST_CASE("loss is finite on reframed sequences and excludes specials' temporal terms") {
    const RegionVocabulary vocab = tiny_vocab();
    VisitModel m(tiny_config(), Variant::Full, vocab.size(), 4);
    TimeScaling scaling;
    const VisitSequence s = tiny_sequence(vocab, 12);
    Rng rng(5);
    const ReframedSequence rf = visitgen::infill::reframe(s, 0.3, rng);
    const ModelInstance in = model::build_instance(rf.tokens, vocab, scaling);
    ag::Tape tape;
    nn::BoundParams P(tape, m.store());
    const auto lb = m.joint_nll_loss(tape, P, in, nn::DropoutCtx{});
    CHECK(std::isfinite(tape.val(lb.total)(0, 0)));
    CHECK(lb.count == double(in.n_targets()));
    tape.backward(lb.total);
    P.flush_grads();
    for (const auto& [name, g] : m.store().grads()) {
        for (double v : g.a) REQUIRE(std::isfinite(v));
    }
}

TEST_CASE("overlong input is rejected") {
    const RegionVocabulary vocab = tiny_vocab();
    ModelConfig cfg = tiny_config();
    cfg.max_seq_len = 4;
    VisitModel m(cfg, Variant::Full, vocab.size(), 0);
    TimeScaling scaling;
    const VisitSequence s = tiny_sequence(vocab, 6);
    const ModelInstance in =
        model::build_instance(train::tokens_from_sequence(s), vocab, scaling);
    ag::Tape tape;
    nn::BoundParams P(tape, m.store());
    CHECK_THROWS_AS(m.forward(tape, P, in, nn::DropoutCtx{}), ArgumentError);
}

TEST_CASE("checkpoint round trip preserves parameters exactly") {
    const RegionVocabulary vocab = tiny_vocab();
    VisitModel m(tiny_config(), Variant::Independence, vocab.size(), 9);
    model::Checkpoint meta;
    meta.config = m.config();
    meta.variant = m.variant();
    meta.vocab_size = vocab.size();
    meta.scaling.epoch_offset = 12345;

    const std::string path = "test_model_ckpt.bin";
    model::save_checkpoint(path, meta, m.store());
    const model::LoadedModel lm = model::load_checkpoint(path);
    CHECK(lm.meta.variant == Variant::Independence);
    CHECK(lm.meta.vocab_size == vocab.size());
    CHECK(lm.meta.scaling.epoch_offset == 12345);
    for (const auto& [name, mat] : m.store().all()) {
        const Matrix& other = lm.model->store().at(name);
        REQUIRE(other.a == mat.a);
    }
    std::remove(path.c_str());
}
