#include "rhythmorph/train.hpp"

#include "rhythmorph/audit.hpp"
#include "rhythmorph/errors.hpp"
#include "rhythmorph/losses.hpp"
#include "rhythmorph/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

namespace rhythmorph {

EmaState ema_init(const ParamStore& params, double decay) {
    if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("EMA decay must lie in (0, 1]");
    EmaState s;
    s.decay = decay;
    for (const auto& p : params.params()) s.shadow.push_back(p.value);
    return s;
}

void ema_update(EmaState& state, const ParamStore& params) {
    if (state.shadow.size() != params.params().size()) {
        throw DataError(DataErrc::shape_mismatch, "ema_update: parameter count mismatch");
    }
    std::size_t i = 0;
    for (const auto& p : params.params()) {
        Matrix& s = state.shadow[i++];
        if (s.rows() != p.value.rows() || s.cols() != p.value.cols()) {
            throw DataError(DataErrc::shape_mismatch, "ema_update: shape mismatch for " + p.name);
        }
        s = state.decay * s + (1.0 - state.decay) * p.value;
    }
}

double cosine_lr(long step, long total_steps, double peak, double floor) {
    if (total_steps <= 1) return floor;
    const double frac = static_cast<double>(std::clamp(step, 0L, total_steps - 1)) / static_cast<double>(total_steps - 1);
    return floor + 0.5 * (peak - floor) * (1.0 + std::cos(std::numbers::pi * frac));
}

AdamW::AdamW(const ParamStore& params, AdamWParams hp) : hp_(hp) {
    for (const auto& p : params.params()) {
        m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
        v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
}

void AdamW::step(ParamStore& params, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(hp_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(hp_.beta2, static_cast<double>(t_));
    std::size_t i = 0;
    for (auto& p : params.params()) {
        Matrix& m = m_[i];
        Matrix& v = v_[i];
        ++i;
        m = hp_.beta1 * m + (1.0 - hp_.beta1) * p.grad;
        v = hp_.beta2 * v + (1.0 - hp_.beta2) * p.grad.cwiseAbs2();
        if (p.decay) p.value *= 1.0 - lr * hp_.weight_decay;
        p.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + hp_.eps);
    }
    fit_counters().parameter_update++;
}

TrainResult train_model(EcgModel& model, std::span<const TrainSample> samples, const TrainParams& tp,
                        const std::function<void(const EpochLog&)>& on_epoch) {
    if (samples.empty()) throw DataError(DataErrc::empty_input, "train: no training samples");
    if (tp.batch < 1 || tp.epochs < 1) throw ConfigError("train: batch and epochs must be >= 1");
    const int n_classes = model.config().n_classes;
    const auto n = static_cast<long>(samples.size());
    const long per_epoch = (n + tp.batch - 1) / tp.batch;
    const long total = per_epoch * tp.epochs;

    TrainResult result;
    result.ema = ema_init(model.params(), tp.ema_decay);
    AdamW opt(model.params(), tp.adamw);
    std::mt19937_64 rng(tp.seed);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    auto last_good = model.snapshot();
    auto last_good_ema = result.ema;

    long step = 0;
    for (int epoch = 0; epoch < tp.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        const bool warm = epoch < tp.bce_warmup_epochs;
        double loss_sum = 0.0, lr = tp.lr_peak;
        Matrix seen_probs(n, n_classes), seen_labels(n, n_classes);
        for (long b = 0; b < per_epoch; ++b) {
            const long lo = b * tp.batch, hi = std::min(n, lo + tp.batch);
            const long bs = hi - lo;
            Matrix probs(bs, n_classes), labels(bs, n_classes);
            std::vector<SliceTrace> traces(static_cast<std::size_t>(bs));
            for (long i = 0; i < bs; ++i) {
                const TrainSample& s = samples[order[static_cast<std::size_t>(lo + i)]];
                probs.row(i) = model.forward(*s.slice, *s.morph, *s.hrv, &traces[static_cast<std::size_t>(i)]).transpose();
                labels.row(i) = s.labels.transpose();
            }
            seen_probs.middleRows(lo, bs) = probs;
            seen_labels.middleRows(lo, bs) = labels;
            const LossResult loss = warm ? bce_loss(probs, labels) : asl_loss(probs, labels, tp.gamma_neg, tp.gamma_pos);
            if (!std::isfinite(loss.value)) {
                model.restore(last_good);
                result.ema = last_good_ema;
                result.diverged = true;
                result.message = "non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step);
                result.steps = step;
                return result;
            }
            model.params().zero_grad();
            for (long i = 0; i < bs; ++i) model.backward(traces[static_cast<std::size_t>(i)], loss.grad.row(i).transpose());
            model.check_gradients();
            if (tp.grad_clip > 0.0) {
                double sq = 0.0;
                for (const auto& p : model.params().params()) sq += p.grad.squaredNorm();
                const double norm = std::sqrt(sq);
                if (norm > tp.grad_clip)
                    for (auto& p : model.params().params()) p.grad *= tp.grad_clip / norm;
            }
            lr = cosine_lr(step, total, tp.lr_peak, tp.lr_floor);
            opt.step(model.params(), lr);
            ema_update(result.ema, model.params());
            loss_sum += loss.value;
            ++step;
        }
        EpochLog log;
        log.epoch = epoch;
        log.lr = lr;
        log.loss = loss_sum / static_cast<double>(per_epoch);
        log.loss_kind = warm ? "bce" : "asl";
        std::vector<std::string> names;
        for (int c = 0; c < n_classes; ++c) names.push_back("c" + std::to_string(c));
        const auto m = evaluate_predictions(seen_probs, seen_labels, names, 0.5);
        log.train_macro_roc_auc = m.macro_roc_auc.value_or(0.0);
        result.log.push_back(log);
        if (on_epoch) on_epoch(log);
        last_good = model.snapshot();
        last_good_ema = result.ema;
    }
    result.steps = step;
    return result;
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
    std::ostringstream out;
    out.precision(10);
    out << "epoch,lr,loss,loss_kind,train_macro_roc_auc\n";
    for (const auto& e : log) {
        out << e.epoch << ',' << e.lr << ',' << e.loss << ',' << e.loss_kind << ',' << e.train_macro_roc_auc << '\n';
    }
    return out.str();
}

}  // namespace rhythmorph
