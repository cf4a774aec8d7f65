#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "visitgen/model.hpp"
#include "visitgen/preprocess.hpp"
#include "visitgen/synth.hpp"
#include "visitgen/train.hpp"

using namespace visitgen;
using model::ModelConfig;
using model::Variant;
using model::VisitModel;

namespace {

ModelConfig small_config() {
    ModelConfig c;
    c.n_layers = 1;
    c.n_heads = 2;
    c.ff_dim = 16;
    c.gmm_components = 2;
    c.dropout = 0.0;
    c.learning_rate = 1e-3;
    c.batch_size = 16;
    c.enc.s2v_scales = 2;
    c.enc.s2v_max = 10000.0;
    c.enc.t2v_dim = 4;
    c.enc.region_emb_dim = 6;
    c.max_seq_len = 128;
    return c;
}

synth::SynthConfig small_data() {
    synth::SynthConfig s;
    s.n_agents = 10;
    s.n_days = 5;
    s.seed = 0;
    s.schedule_noise_min = 2.0;
    return s;
}

}  // namespace

TEST_CASE("acc_at_k on the worked examples") {
    CHECK(train::acc_at_k({{0.1, 0.9}, {0.8, 0.2}}, {1, 0}, 1) == 1.0);
    CHECK(train::acc_at_k({{0.1, 0.9}, {0.8, 0.2}}, {0, 1}, 2) == 1.0);  // k = V
    CHECK(train::acc_at_k({{0.5, 0.3, 0.2}}, {1}, 1) == 0.0);
    CHECK(train::acc_at_k({{0.5, 0.3, 0.2}}, {1}, 2) == 1.0);
    CHECK_THROWS_AS(train::acc_at_k({{0.5, 0.5}}, {0}, 3), ArgumentError);

    // Ties break toward the smaller id.
    CHECK(train::acc_at_k({{0.5, 0.5}}, {0}, 1) == 1.0);
    CHECK(train::acc_at_k({{0.5, 0.5}}, {1}, 1) == 0.0);

    // Monotone in k.
    Rng rng(3);
    std::vector<std::vector<double>> probs;
    std::vector<int> truths;
    for (int i = 0; i < 50; ++i) {
        std::vector<double> p(10);
        double z = 0.0;
        for (double& v : p) z += (v = rng.uniform());
        for (double& v : p) v /= z;
        probs.push_back(p);
        truths.push_back(static_cast<int>(rng.below(10)));
    }
    double prev = 0.0;
    for (int k = 1; k <= 10; ++k) {
        const double a = train::acc_at_k(probs, truths, k);
        CHECK(a >= prev);
        prev = a;
    }
    CHECK(train::acc_at_k(probs, truths, 10) == 1.0);
}

TEST_CASE("p_within scalar mode clamps negatives") {
    using train::PredMode;
    using train::TemporalPrediction;
    TemporalPrediction within;
    within.mode = PredMode::Scalar;
    within.scalar_minutes = 7.0;
    TemporalPrediction neg;
    neg.mode = PredMode::Scalar;
    neg.scalar_minutes = -3.0;

    CHECK(train::p_within({within}, {10.0}, 5.0) == 1.0);
    CHECK(train::p_within({neg}, {2.0}, 5.0) == 1.0);   // clamped to 0, |0-2| <= 5
    CHECK(train::p_within({neg}, {12.0}, 5.0) == 0.0);
}

TEST_CASE("p_within distribution mode matches the erf oracle") {
    using train::PredMode;
    using train::TemporalPrediction;
    // Mixture centered at g with sigma chosen so +-t = +-1.96 sigma.
    const double g_minutes = 600.0, t_minutes = 30.0;
    TemporalPrediction d;
    d.mode = PredMode::Distribution;
    d.minutes_per_unit = 60.0;  // hours
    d.params.weights = {1.0};
    d.params.means = {g_minutes / 60.0};
    d.params.scales = {t_minutes / 1.96 / 60.0};
    CHECK(train::p_within({d}, {g_minutes}, t_minutes) == Catch::Approx(0.95).margin(1e-3));

    // Monotone in t.
    double prev = 0.0;
    for (double t : {5.0, 10.0, 20.0, 40.0}) {
        const double v = train::p_within({d}, {g_minutes}, t);
        CHECK(v >= prev);
        prev = v;
    }
}

TEST_CASE("early stopping patience semantics") {
    // Validation losses [5, 4, 4.1 x10]: stop after the 10th non-improving
    // epoch; the best epoch is the 2nd.
    train::EarlyStopper stopper(10);
    CHECK_FALSE(stopper.observe(5.0));
    CHECK_FALSE(stopper.observe(4.0));
    for (int i = 0; i < 9; ++i) CHECK_FALSE(stopper.observe(4.1));
    CHECK(stopper.observe(4.1));  // 10th non-improving epoch
    CHECK(stopper.best_epoch() == 2);
    CHECK(stopper.best() == 4.0);
}

TEST_CASE("training is deterministic and decreases the loss") {
    const synth::SynthResult data = synth::generate(small_data());
    TimeScaling scaling;

    prep::SplitSpec spec;
    spec.mode = prep::SplitSpec::Mode::Chronological;
    spec.window = 8;
    const prep::SplitResult splits = prep::split(data.sequences, spec, 0);
    REQUIRE(splits.train.size() > 20);

    train::TrainOptions opt;
    opt.max_epochs = 3;
    opt.batch_size = 16;
    opt.learning_rate = 1e-3;
    opt.seed = 0;

    VisitModel m1(small_config(), Variant::Full, data.vocab.size(), 0);
    const train::TrainResult r1 = train::fit(m1, splits.train, splits.valid,
                                             train::Task::NextVisit, data.vocab, scaling, opt);
    VisitModel m2(small_config(), Variant::Full, data.vocab.size(), 0);
    const train::TrainResult r2 = train::fit(m2, splits.train, splits.valid,
                                             train::Task::NextVisit, data.vocab, scaling, opt);

    REQUIRE(r1.log.size() == r2.log.size());
    for (std::size_t i = 0; i < r1.log.size(); ++i) {
        CHECK(r1.log[i].train_loss == r2.log[i].train_loss);
        CHECK(r1.log[i].val_loss == r2.log[i].val_loss);
    }
    CHECK(r1.log.back().train_loss < r1.log.front().train_loss);

    // Restored best parameters are identical across the two runs.
    for (const auto& [name, mat] : m1.store().all())
        CHECK(m2.store().at(name).a == mat.a);
}

TEST_CASE("full-batch steps strictly decrease the joint NLL") {
    const synth::SynthResult data = synth::generate(small_data());
    TimeScaling scaling;
    Rng rng(1);
    auto instances = train::build_instances(
        {data.sequences.begin(), data.sequences.begin() + 4}, train::Task::Infill, data.vocab,
        scaling, 0.2, rng);
    REQUIRE(!instances.empty());

    VisitModel m(small_config(), Variant::Full, data.vocab.size(), 0);
    double prev = std::numeric_limits<double>::infinity();
    for (int step = 0; step < 20; ++step) {
        const double loss = train::train_step(m, instances, 1e-3);
        CHECK(loss < prev + 1e-7);
        prev = loss;
    }
}

TEST_CASE("independence variant ignores supplied targets in temporal heads") {
    const synth::SynthResult data = synth::generate(small_data());
    TimeScaling scaling;
    VisitModel m(small_config(), Variant::Independence, data.vocab.size(), 0);

    const VisitSequence& s = data.sequences[0];
    VisitSequence window;
    window.agent = s.agent;
    window.visits.assign(s.visits.begin(), s.visits.begin() + 8);
    model::ModelInstance in =
        model::build_instance(train::tokens_from_sequence(window), data.vocab, scaling);

    auto head_outputs = [&](const model::ModelInstance& inst) {
        ag::Tape tape;
        nn::BoundParams P(tape, m.store());
        const auto fw = m.forward(tape, P, inst, nn::DropoutCtx{});
        return std::make_pair(tape.val(fw.travel.mu), tape.val(fw.duration.mu));
    };
    const auto [tm0, dm0] = head_outputs(in);

    // Permute the teacher-forced region ids; temporal outputs must not move.
    model::ModelInstance permuted = in;
    std::rotate(permuted.target_ids.begin(), permuted.target_ids.begin() + 1,
                permuted.target_ids.end());
    std::rotate(permuted.target_arrival_days.begin(), permuted.target_arrival_days.begin() + 1,
                permuted.target_arrival_days.end());
    const auto [tm1, dm1] = head_outputs(permuted);
    CHECK(tm0.a == tm1.a);
    CHECK(dm0.a == dm1.a);
}

TEST_CASE("regression variant emits scalars and shares region wiring with full") {
    const synth::SynthResult data = synth::generate(small_data());
    TimeScaling scaling;
    VisitModel reg(small_config(), Variant::Regression, data.vocab.size(), 0);
    VisitModel full(small_config(), Variant::Full, data.vocab.size(), 0);
    VisitModel ind(small_config(), Variant::Independence, data.vocab.size(), 0);

    VisitSequence window;
    window.agent = data.sequences[0].agent;
    window.visits.assign(data.sequences[0].visits.begin(),
                         data.sequences[0].visits.begin() + 8);
    model::ModelInstance in =
        model::build_instance(train::tokens_from_sequence(window), data.vocab, scaling);

    ag::Tape tape;
    nn::BoundParams P(tape, reg.store());
    const auto fw = reg.forward(tape, P, in, nn::DropoutCtx{});
    CHECK(tape.val(fw.travel.mu).cols == 1);
    CHECK(tape.val(fw.duration.mu).cols == 1);

    // Same init seed: identical region-head parameters across variants.
    for (const std::string name :
         {"regionhead.out.w", "regionhead.layer0.attn.wq", "backbone.layer0.ff.w1"}) {
        CHECK(full.store().at(name).a == ind.store().at(name).a);
        CHECK(full.store().at(name).a == reg.store().at(name).a);
    }
}

TEST_CASE("evaluate produces sane teacher-forced metrics") {
    const synth::SynthResult data = synth::generate(small_data());
    TimeScaling scaling;
    prep::SplitSpec spec;
    spec.mode = prep::SplitSpec::Mode::Chronological;
    spec.window = 8;
    const prep::SplitResult splits = prep::split(data.sequences, spec, 0);

    VisitModel m(small_config(), Variant::Full, data.vocab.size(), 0);
    Rng rng(0);
    const auto instances = train::build_instances(splits.test, train::Task::NextVisit, data.vocab,
                                                  scaling, 0.0, rng);
    const train::MetricsReport rep = train::evaluate(m, instances, scaling);
    CHECK(rep.region_positions == instances.size());
    double prev = 0.0;
    for (int k : {1, 5, 10, 20}) {
        CHECK(rep.acc.at(k) >= prev);
        CHECK(rep.acc.at(k) <= 1.0);
        prev = rep.acc.at(k);
    }
    CHECK(rep.arrival_p.at(5) <= rep.arrival_p.at(10));
    CHECK(rep.arrival_p.at(10) <= rep.arrival_p.at(20));

    // Threaded evaluation merges deterministically.
    const train::MetricsReport rep4 = train::evaluate(m, instances, scaling, 4);
    CHECK(rep4.acc.at(1) == rep.acc.at(1));
    CHECK(rep4.arrival_p.at(10) == rep.arrival_p.at(10));

    // acc@V == 1 always.
    const train::MetricsReport repv =
        train::evaluate(m, instances, scaling, 1, {data.vocab.size()});
    CHECK(repv.acc.at(data.vocab.size()) == 1.0);
}
