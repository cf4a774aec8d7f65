#include <catch2/catch_amalgamated.hpp>

#include "visitgen/infer.hpp"
#include "visitgen/synth.hpp"
#include "visitgen/train.hpp"

using namespace visitgen;
using model::ModelConfig;
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
    c.enc.s2v_max = 10000.0;
    c.enc.t2v_dim = 4;
    c.enc.region_emb_dim = 6;
    c.max_seq_len = 128;
    return c;
}

struct Fixture {
    synth::SynthResult data;
    VisitModel net;
    model::Checkpoint meta;

    Fixture()
        : data(synth::generate([] {
              synth::SynthConfig s;
              s.n_agents = 6;
              s.n_days = 4;
              s.seed = 2;
              return s;
          }())),
          net(tiny_config(), Variant::Full, data.vocab.size(), 0) {
        meta.config = net.config();
        meta.variant = net.variant();
        meta.vocab_size = data.vocab.size();
    }
};

std::vector<Token> make_partial(const VisitSequence& s, std::initializer_list<int> blank_at) {
    std::vector<Token> out;
    std::vector<bool> blank(s.visits.size(), false);
    for (int i : blank_at) blank[static_cast<std::size_t>(i)] = true;
    for (std::size_t i = 0; i < s.visits.size(); ++i) {
        if (blank[i]) {
            if (out.empty() || out.back().kind != TokenKind::Blank)
                out.push_back(Token::special(TokenKind::Blank));
        } else {
            out.push_back(Token::from_visit(s.visits[i]));
        }
    }
    return out;
}

}  // namespace

TEST_CASE("next visit prediction respects temporal invariants") {
    Fixture f;
    VisitSequence ctx;
    ctx.agent = f.data.sequences[0].agent;
    ctx.visits.assign(f.data.sequences[0].visits.begin(),
                      f.data.sequences[0].visits.begin() + 6);

    const auto g1 =
        infer::predict_next_visit(f.net, f.meta, f.data.vocab, ctx, infer::Decode::Greedy);
    const auto g2 =
        infer::predict_next_visit(f.net, f.meta, f.data.vocab, ctx, infer::Decode::Greedy);
    CHECK(g1.visit.arrival >= ctx.visits.back().departure);
    CHECK(g1.visit.departure >= g1.visit.arrival);
    CHECK(g1.visit == g2.visit);  // greedy is deterministic
    CHECK(f.data.vocab.is_cell(g1.visit.region));
    CHECK(g1.region_probs.size() == static_cast<std::size_t>(f.data.vocab.size()));
    double sum = 0.0;
    for (double p : g1.region_probs) sum += p;
    CHECK(sum == Catch::Approx(1.0).epsilon(1e-9));
    CHECK_NOTHROW(gmm::validate(g1.travel_params));
    CHECK_NOTHROW(gmm::validate(g1.duration_params));

    const auto s1 =
        infer::predict_next_visit(f.net, f.meta, f.data.vocab, ctx, infer::Decode::Sample, 7);
    const auto s2 =
        infer::predict_next_visit(f.net, f.meta, f.data.vocab, ctx, infer::Decode::Sample, 7);
    CHECK(s1.visit == s2.visit);  // equal seeds agree
    CHECK(s1.visit.arrival >= ctx.visits.back().departure);
    CHECK(s1.visit.departure >= s1.visit.arrival);

    VisitSequence empty;
    CHECK_THROWS_AS(
        infer::predict_next_visit(f.net, f.meta, f.data.vocab, empty, infer::Decode::Greedy),
        ArgumentError);
}

TEST_CASE("infill closes every blank and keeps temporal invariants") {
    Fixture f;
    const VisitSequence& s = f.data.sequences[1];
    REQUIRE(s.visits.size() >= 8);
    const auto partial = make_partial(s, {2, 5});

    const auto res =
        infer::infill(f.net, f.meta, f.data.vocab, partial, infer::Decode::Sample, 3, 11);
    CHECK(res.diag.ans_count == 2);
    CHECK(res.diag.per_blank_counts.size() == 2);
    for (int c : res.diag.per_blank_counts) CHECK(c <= 3);
    for (const auto& v : res.sequence.visits) CHECK(v.departure >= v.arrival);

    // Generated visits sit positionally between their flanking known visits.
    std::size_t known = 0;
    for (const auto& t : partial)
        if (t.is_visit()) ++known;
    CHECK(res.sequence.visits.size() ==
          known + static_cast<std::size_t>(res.diag.per_blank_counts[0] +
                                           res.diag.per_blank_counts[1]));
    CHECK(res.sequence.visits.front() == partial.front().visit);
    CHECK(res.sequence.visits.back() == partial.back().visit);

    // Greedy infill is a pure function of (partial, checkpoint).
    const auto a =
        infer::infill(f.net, f.meta, f.data.vocab, partial, infer::Decode::Greedy, 3, 0);
    const auto b =
        infer::infill(f.net, f.meta, f.data.vocab, partial, infer::Decode::Greedy, 3, 99);
    CHECK(a.sequence == b.sequence);
}

TEST_CASE("a head that always answers leaves blanks empty") {
    Fixture f;
    // Bias the region head overwhelmingly toward ANS.
    Matrix& b = f.net.store().at("regionhead.out.b");
    b(0, f.data.vocab.ans_id()) = 1000.0;

    const VisitSequence& s = f.data.sequences[2];
    const auto partial = make_partial(s, {1, 3});
    const auto res =
        infer::infill(f.net, f.meta, f.data.vocab, partial, infer::Decode::Greedy, 4, 0);
    CHECK(res.diag.ans_count == 2);
    CHECK(res.diag.per_blank_counts == std::vector<int>{0, 0});
    std::size_t known = 0;
    for (const auto& t : partial)
        if (t.is_visit()) ++known;
    CHECK(res.sequence.visits.size() == known);  // partial without the blanks
    CHECK_FALSE(res.diag.truncated);
}

TEST_CASE("the per-blank cap forces closure") {
    Fixture f;
    // Never answer: drive ANS probability to nothing.
    Matrix& b = f.net.store().at("regionhead.out.b");
    b(0, f.data.vocab.ans_id()) = -1000.0;

    const VisitSequence& s = f.data.sequences[3];
    const auto partial = make_partial(s, {2});
    const auto res =
        infer::infill(f.net, f.meta, f.data.vocab, partial, infer::Decode::Greedy, 3, 0);
    CHECK(res.diag.ans_count == 1);
    CHECK(res.diag.per_blank_counts == std::vector<int>{3});
    CHECK(res.diag.truncated);
}

TEST_CASE("infill input validation") {
    Fixture f;
    const VisitSequence& s = f.data.sequences[0];

    std::vector<Token> no_blanks;
    for (const auto& v : s.visits) no_blanks.push_back(Token::from_visit(v));
    CHECK_THROWS_AS(
        infer::infill(f.net, f.meta, f.data.vocab, no_blanks, infer::Decode::Greedy, 3, 0),
        ArgumentError);

    auto with_sep = make_partial(s, {2});
    with_sep.push_back(Token::special(TokenKind::Sep));
    CHECK_THROWS_AS(
        infer::infill(f.net, f.meta, f.data.vocab, with_sep, infer::Decode::Greedy, 3, 0),
        ArgumentError);

    // Leading blank has no travel anchor.
    std::vector<Token> leading{Token::special(TokenKind::Blank)};
    for (const auto& v : s.visits) leading.push_back(Token::from_visit(v));
    CHECK_THROWS_AS(
        infer::infill(f.net, f.meta, f.data.vocab, leading, infer::Decode::Greedy, 3, 0),
        ArgumentError);
}

TEST_CASE("regression checkpoints drive generation with scalar heads") {
    Fixture f;
    VisitModel reg(tiny_config(), Variant::Regression, f.data.vocab.size(), 0);
    model::Checkpoint meta = f.meta;
    meta.variant = Variant::Regression;

    VisitSequence ctx;
    ctx.agent = f.data.sequences[0].agent;
    ctx.visits.assign(f.data.sequences[0].visits.begin(),
                      f.data.sequences[0].visits.begin() + 5);
    const auto g = infer::predict_next_visit(reg, meta, f.data.vocab, ctx, infer::Decode::Greedy);
    CHECK(g.visit.arrival >= ctx.visits.back().departure);
    CHECK(g.visit.departure >= g.visit.arrival);
}
