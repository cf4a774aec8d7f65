// Teacher-forced training with early stopping, metric computation (top-k
// region accuracy, interval hit probabilities), and the ablation variants.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "visitgen/core.hpp"
#include "visitgen/gmm.hpp"
#include "visitgen/model.hpp"
#include "visitgen/reframe.hpp"
#include "visitgen/rng.hpp"
#include "visitgen/vocab.hpp"

namespace visitgen::train {

enum class Task { NextVisit, Infill };

inline const char* task_name(Task t) { return t == Task::NextVisit ? "next" : "infill"; }
inline Task task_from_name(const std::string& s) {
    if (s == "next") return Task::NextVisit;
    if (s == "infill") return Task::Infill;
    throw ConfigError("unknown task: " + s);
}

// ---------------------------------------------------------------------------
// Instance assembly
// ---------------------------------------------------------------------------

inline std::vector<Token> tokens_from_sequence(const VisitSequence& seq) {
    std::vector<Token> out;
    out.reserve(seq.visits.size());
    for (std::size_t i = 0; i < seq.visits.size(); ++i)
        out.push_back(Token::from_visit(seq.visits[i], static_cast<std::int64_t>(i),
                                        i == 0 ? Timestamp{-1} : seq.visits[i - 1].departure));
    return out;
}

// Next-visit instances: plain windows; the metric position is the final
// prediction of each window.
inline model::ModelInstance next_visit_instance(const VisitSequence& window,
                                                const RegionVocabulary& vocab,
                                                const TimeScaling& scaling) {
    model::ModelInstance in = model::build_instance(tokens_from_sequence(window), vocab, scaling);
    if (!in.eval_mark.empty()) in.eval_mark.back() = true;
    return in;
}

// Infilling instances: reframed sequences; metrics cover the answer-visit
// predictions after SEP, never the special tokens.
inline model::ModelInstance infill_instance(const ReframedSequence& rf,
                                            const RegionVocabulary& vocab,
                                            const TimeScaling& scaling) {
    model::ModelInstance in = model::build_instance(rf.tokens, vocab, scaling);
    for (std::size_t p = 1; p < rf.tokens.size(); ++p)
        if (p > rf.sep_position && rf.tokens[p].is_visit())
            in.eval_mark[p - 1] = true;
    return in;
}

inline std::vector<model::ModelInstance> build_instances(const std::vector<VisitSequence>& seqs,
                                                         Task task, const RegionVocabulary& vocab,
                                                         const TimeScaling& scaling,
                                                         double mask_prob, Rng rng) {
    std::vector<model::ModelInstance> out;
    out.reserve(seqs.size());
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        if (task == Task::NextVisit) {
            out.push_back(next_visit_instance(seqs[i], vocab, scaling));
        } else {
            if (seqs[i].visits.size() < 3) continue;  // first/last protected
            Rng seq_rng = rng.fork(i);
            out.push_back(infill_instance(infill::reframe(seqs[i], mask_prob, seq_rng), vocab,
                                          scaling));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

// Rank of the true id among scores, ties broken by ascending id: the number
// of ids that would be listed before it.
inline int rank_of_truth(const std::vector<double>& scores, int truth) {
    int rank = 0;
    const double st = scores[static_cast<std::size_t>(truth)];
    for (int id = 0; id < static_cast<int>(scores.size()); ++id) {
        if (id == truth) continue;
        const double s = scores[static_cast<std::size_t>(id)];
        if (s > st || (s == st && id < truth)) ++rank;
    }
    return rank;
}

// Fraction of positions whose true id is among the k highest-probability ids.
inline double acc_at_k(const std::vector<std::vector<double>>& predictions,
                       const std::vector<int>& truths, int k) {
    if (predictions.size() != truths.size())
        throw ArgumentError("acc_at_k: prediction/truth count mismatch");
    if (predictions.empty()) return 0.0;
    if (k < 1 || static_cast<std::size_t>(k) > predictions[0].size())
        throw ArgumentError("acc_at_k: k outside [1, V]");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
        if (rank_of_truth(predictions[i], truths[i]) < k) ++hits;
    return double(hits) / double(predictions.size());
}

enum class PredMode { Scalar, Distribution };

struct TemporalPrediction {
    PredMode mode = PredMode::Distribution;
    double scalar_minutes = 0.0;               // Scalar mode (already unscaled)
    gmm::GaussianMixtureParams params;         // Distribution mode, scaled units
    double minutes_per_unit = 1.0;             // scaled unit -> minutes
};

// Scalar mode: hit fraction with negative predictions clamped to zero.
// Distribution mode: mean clipped-interval probability of truth +- t minutes.
inline double p_within(const std::vector<TemporalPrediction>& preds,
                       const std::vector<double>& truth_minutes, double t_minutes) {
    if (preds.size() != truth_minutes.size())
        throw ArgumentError("p_within: prediction/truth count mismatch");
    if (preds.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double g = truth_minutes[i];
        if (preds[i].mode == PredMode::Scalar) {
            const double pred = std::max(preds[i].scalar_minutes, 0.0);
            acc += std::abs(pred - g) <= t_minutes ? 1.0 : 0.0;
        } else {
            const double mpu = preds[i].minutes_per_unit;
            acc += gmm::interval_prob_clipped(preds[i].params, (g - t_minutes) / mpu,
                                              (g + t_minutes) / mpu);
        }
    }
    return acc / double(preds.size());
}

struct MetricsReport {
    std::vector<int> ks{1, 5, 10, 20};
    std::vector<double> tolerances{5.0, 10.0, 20.0};
    std::map<int, double> acc;            // k -> fraction
    std::map<int, double> arrival_p;      // t minutes -> fraction/probability
    std::map<int, double> departure_p;
    std::size_t region_positions = 0;
    std::size_t arrival_positions = 0;
    std::size_t departure_positions = 0;

    std::string to_csv() const {
        std::string out = "metric,value,count\n";
        auto add = [&out](const std::string& name, double v, std::size_t n) {
            out += name + "," + format(v) + "," + std::to_string(n) + "\n";
        };
        for (const auto& [k, v] : acc) add("acc@" + std::to_string(k), v, region_positions);
        for (const auto& [t, v] : arrival_p)
            add("arrival_p" + std::to_string(t), v, arrival_positions);
        for (const auto& [t, v] : departure_p)
            add("departure_p" + std::to_string(t), v, departure_positions);
        return out;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        for (const auto& [k, v] : acc) j["acc@" + std::to_string(k)] = v;
        for (const auto& [t, v] : arrival_p) j["arrival_p" + std::to_string(t)] = v;
        for (const auto& [t, v] : departure_p) j["departure_p" + std::to_string(t)] = v;
        j["region_positions"] = region_positions;
        j["arrival_positions"] = arrival_positions;
        j["departure_positions"] = departure_positions;
        return j;
    }

private:
    static std::string format(double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6f", v);
        return buf;
    }
};

// ---------------------------------------------------------------------------
// Evaluation (teacher forced)
// ---------------------------------------------------------------------------

namespace detail {

struct EvalPartial {
    // hit counts per k index; probability sums per tolerance index
    std::vector<std::size_t> acc_hits;
    std::vector<double> arrival_sums, departure_sums;
    std::size_t region_positions = 0;
    std::size_t arrival_positions = 0;
    std::size_t departure_positions = 0;
};

}  // namespace detail

inline MetricsReport evaluate(model::VisitModel& m,
                              const std::vector<model::ModelInstance>& instances,
                              const TimeScaling& scaling, int threads = 1,
                              const std::vector<int>& ks = {1, 5, 10, 20},
                              const std::vector<double>& tolerances = {5.0, 10.0, 20.0}) {
    for (int k : ks)
        if (k < 1 || k > m.vocab_size()) throw ArgumentError("evaluate: k outside [1, V]");

    const bool regression = m.variant() == model::Variant::Regression;
    const double travel_mpu = scaling.travel_divisor / 60.0;
    const double duration_mpu = scaling.duration_divisor / 60.0;

    std::vector<detail::EvalPartial> partials(instances.size());
    auto run_one = [&](std::size_t idx) {
        const model::ModelInstance& in = instances[idx];
        detail::EvalPartial& part = partials[idx];
        part.acc_hits.assign(ks.size(), 0);
        part.arrival_sums.assign(tolerances.size(), 0.0);
        part.departure_sums.assign(tolerances.size(), 0.0);

        ag::Tape tape;
        nn::BoundParams P(tape, m.store());
        const model::ForwardVars fw = m.forward(tape, P, in, nn::DropoutCtx{});
        const Matrix& logits = tape.val(fw.region_logits);
        std::vector<gmm::GaussianMixtureParams> travel_rows, duration_rows;
        Matrix travel_reg, duration_reg;
        if (regression) {
            travel_reg = tape.val(fw.travel.mu);
            duration_reg = tape.val(fw.duration.mu);
        } else {
            travel_rows = m.mixture_rows(tape, fw.travel);
            duration_rows = m.mixture_rows(tape, fw.duration);
        }

        for (int i = 0; i < in.n_targets(); ++i) {
            const auto si = static_cast<std::size_t>(i);
            if (!in.eval_mark[si] || !in.target_is_visit[si]) continue;
            // Region ranking straight from logits (softmax is monotone).
            std::vector<double> scores(logits.row(i), logits.row(i) + logits.cols);
            const int rank = rank_of_truth(scores, in.target_ids[si]);
            for (std::size_t ki = 0; ki < ks.size(); ++ki)
                if (rank < ks[ki]) ++part.acc_hits[ki];
            ++part.region_positions;

            if (in.target_has_travel[si]) {
                const double g_min = in.travel_hours[si] * travel_mpu;
                for (std::size_t ti = 0; ti < tolerances.size(); ++ti) {
                    const double tmin = tolerances[ti];
                    double v;
                    if (regression) {
                        const double pred_min = travel_reg(i, 0) * travel_mpu;
                        v = std::abs(std::max(pred_min, 0.0) - g_min) <= tmin ? 1.0 : 0.0;
                    } else {
                        v = gmm::interval_prob_clipped(travel_rows[si],
                                                       (g_min - tmin) / travel_mpu,
                                                       (g_min + tmin) / travel_mpu);
                    }
                    part.arrival_sums[ti] += v;
                }
                ++part.arrival_positions;
            }
            {
                const double g_min = in.duration_days[si] * duration_mpu;
                for (std::size_t ti = 0; ti < tolerances.size(); ++ti) {
                    const double tmin = tolerances[ti];
                    double v;
                    if (regression) {
                        const double pred_min = duration_reg(i, 0) * duration_mpu;
                        v = std::abs(std::max(pred_min, 0.0) - g_min) <= tmin ? 1.0 : 0.0;
                    } else {
                        v = gmm::interval_prob_clipped(duration_rows[si],
                                                       (g_min - tmin) / duration_mpu,
                                                       (g_min + tmin) / duration_mpu);
                    }
                    part.departure_sums[ti] += v;
                }
                ++part.departure_positions;
            }
        }
    };

    if (threads <= 1) {
        for (std::size_t i = 0; i < instances.size(); ++i) run_one(i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < instances.size();
                     i = next.fetch_add(1))
                    run_one(i);
            });
        for (auto& th : pool) th.join();
    }

    // Deterministic merge in instance order.
    MetricsReport rep;
    rep.ks = ks;
    rep.tolerances = tolerances;
    std::vector<std::size_t> acc_hits(ks.size(), 0);
    std::vector<double> arr(tolerances.size(), 0.0), dep(tolerances.size(), 0.0);
    for (const auto& part : partials) {
        if (part.acc_hits.empty()) continue;
        for (std::size_t i = 0; i < ks.size(); ++i) acc_hits[i] += part.acc_hits[i];
        for (std::size_t i = 0; i < tolerances.size(); ++i) {
            arr[i] += part.arrival_sums[i];
            dep[i] += part.departure_sums[i];
        }
        rep.region_positions += part.region_positions;
        rep.arrival_positions += part.arrival_positions;
        rep.departure_positions += part.departure_positions;
    }
    for (std::size_t i = 0; i < ks.size(); ++i)
        rep.acc[ks[i]] = rep.region_positions ? double(acc_hits[i]) / rep.region_positions : 0.0;
    for (std::size_t i = 0; i < tolerances.size(); ++i) {
        rep.arrival_p[int(tolerances[i])] =
            rep.arrival_positions ? arr[i] / rep.arrival_positions : 0.0;
        rep.departure_p[int(tolerances[i])] =
            rep.departure_positions ? dep[i] / rep.departure_positions : 0.0;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Loss over a set of instances (no update)
// ---------------------------------------------------------------------------

inline double batch_loss(model::VisitModel& m, const std::vector<model::ModelInstance>& instances) {
    double sum = 0.0, count = 0.0;
    for (const auto& in : instances) {
        ag::Tape tape;
        nn::BoundParams P(tape, m.store());
        const model::LossBreakdown lb = m.joint_nll_loss(tape, P, in, nn::DropoutCtx{});
        sum += tape.val(lb.total)(0, 0);
        count += lb.count;
    }
    if (count == 0.0) return 0.0;
    return sum / count;
}

// One optimizer step over the given instances (full batch). Returns the loss
// before the update.
inline double train_step(model::VisitModel& m, const std::vector<model::ModelInstance>& instances,
                         double lr, nn::DropoutCtx drop = {}) {
    m.store().zero_grads();
    double sum = 0.0, count = 0.0;
    for (std::size_t bi = 0; bi < instances.size(); ++bi) {
        ag::Tape tape;
        nn::BoundParams P(tape, m.store());
        const model::LossBreakdown lb = m.joint_nll_loss(tape, P, instances[bi], drop);
        const double v = tape.val(lb.total)(0, 0);
        if (!std::isfinite(v))
            throw NumericError("non-finite loss at batch instance " + std::to_string(bi));
        tape.backward(lb.total);
        P.flush_grads();
        sum += v;
        count += lb.count;
    }
    if (count == 0.0) throw ArgumentError("train_step: batch has no counted positions");
    m.store().adam_step(lr, 1.0 / count);
    return sum / count;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainOptions {
    int max_epochs = 100;
    int patience = 10;
    int batch_size = 32;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    double mask_prob = 0.2;   // infilling task
    bool dynamic_mask = true; // redraw training masks each epoch
    std::ostream* progress = nullptr;
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

// Patience-based early stopping: stop after `patience` consecutive epochs
// without a strict improvement of the best validation loss.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience) : patience_(patience) {}

    // Returns true when training should stop after this observation.
    bool observe(double val_loss) {
        ++epoch_;
        if (val_loss < best_) {
            best_ = val_loss;
            best_epoch_ = epoch_;
            bad_ = 0;
            return false;
        }
        return ++bad_ >= patience_;
    }

    double best() const { return best_; }
    int best_epoch() const { return best_epoch_; }

private:
    int patience_;
    int epoch_ = 0;
    int bad_ = 0;
    int best_epoch_ = 0;
    double best_ = std::numeric_limits<double>::infinity();
};

struct TrainResult {
    std::vector<EpochLog> log;
    int best_epoch = 0;        // 1-based
    double best_val_loss = 0.0;
    int epochs_run = 0;

    std::string log_csv() const {
        std::string out = "epoch,train_loss,val_loss\n";
        for (const auto& e : log) {
            char buf[96];
            std::snprintf(buf, sizeof(buf), "%d,%.9f,%.9f\n", e.epoch, e.train_loss, e.val_loss);
            out += buf;
        }
        return out;
    }
};

inline TrainResult fit(model::VisitModel& m, const std::vector<VisitSequence>& train_seqs,
                       const std::vector<VisitSequence>& valid_seqs, Task task,
                       const RegionVocabulary& vocab, const TimeScaling& scaling,
                       const TrainOptions& opt) {
    if (train_seqs.empty()) throw ConfigError("fit: empty training set");
    Rng base(mix_seed(opt.seed, 0x7EA1));

    // Frozen validation instances (fixed masks for comparable losses).
    const std::vector<model::ModelInstance> val_instances =
        build_instances(valid_seqs, task, vocab, scaling, opt.mask_prob, base.fork(0xFEED));

    // Next-visit instances never change; infilling ones are redrawn per epoch.
    std::vector<model::ModelInstance> static_instances;
    if (task == Task::NextVisit)
        static_instances = build_instances(train_seqs, task, vocab, scaling, 0.0, base.fork(1));

    TrainResult res;
    EarlyStopper stopper(opt.patience);
    std::map<std::string, Matrix> best_params = m.store().snapshot();

    for (int epoch = 1; epoch <= opt.max_epochs; ++epoch) {
        const std::vector<model::ModelInstance>& epoch_instances =
            task == Task::NextVisit
                ? static_instances
                : (static_instances = build_instances(
                       train_seqs, task, vocab, scaling, opt.mask_prob,
                       opt.dynamic_mask ? base.fork(0xE000 + epoch) : base.fork(0xE000)));

        Rng order_rng = base.fork(0x0DE0 + epoch);
        std::vector<std::size_t> order(epoch_instances.size());
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[order_rng.below(i)]);

        Rng drop_rng = base.fork(0xD120 + epoch);
        nn::DropoutCtx drop{m.config().dropout > 0.0, m.config().dropout, &drop_rng};

        double epoch_sum = 0.0, epoch_count = 0.0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += opt.batch_size) {
            const std::size_t b1 = std::min(order.size(), b0 + opt.batch_size);
            m.store().zero_grads();
            double sum = 0.0, count = 0.0;
            for (std::size_t oi = b0; oi < b1; ++oi) {
                const model::ModelInstance& in = epoch_instances[order[oi]];
                ag::Tape tape;
                nn::BoundParams P(tape, m.store());
                const model::LossBreakdown lb = m.joint_nll_loss(tape, P, in, drop);
                const double v = tape.val(lb.total)(0, 0);
                if (!std::isfinite(v))
                    throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                                       ", batch instance " + std::to_string(order[oi]));
                tape.backward(lb.total);
                P.flush_grads();
                sum += v;
                count += lb.count;
            }
            if (count > 0.0) {
                m.store().adam_step(opt.learning_rate, 1.0 / count);
                epoch_sum += sum;
                epoch_count += count;
            }
        }

        const double train_loss = epoch_count > 0.0 ? epoch_sum / epoch_count : 0.0;
        const double val_loss = val_instances.empty() ? train_loss : batch_loss(m, val_instances);
        res.log.push_back(EpochLog{epoch, train_loss, val_loss});
        res.epochs_run = epoch;
        if (opt.progress)
            (*opt.progress) << "epoch " << epoch << " train_loss " << train_loss << " val_loss "
                            << val_loss << "\n";

        const double prev_best = stopper.best();
        const bool stop = stopper.observe(val_loss);
        if (val_loss < prev_best) {
            res.best_epoch = epoch;
            best_params = m.store().snapshot();
        }
        if (stop) break;
    }
    res.best_val_loss = stopper.best();
    m.store().restore(best_params);
    return res;
}

}  // namespace visitgen::train
