#pragma once

#include "rhythmorph/model.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace rhythmorph {

struct EmaState {
    double decay = 0.999;
    std::vector<Matrix> shadow;
};

EmaState ema_init(const ParamStore& params, double decay);
// shadow <- decay * shadow + (1 - decay) * params; throws on shape mismatch.
void ema_update(EmaState& state, const ParamStore& params);

// Cosine decay from `peak` at step 0 to exactly `floor` at step total-1.
double cosine_lr(long step, long total_steps, double peak, double floor);

struct AdamWParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

class AdamW {
public:
    AdamW(const ParamStore& params, AdamWParams hp);
    void step(ParamStore& params, double lr);
    long steps() const { return t_; }

private:
    AdamWParams hp_;
    std::vector<Matrix> m_, v_;
    long t_ = 0;
};

struct TrainSample {
    const Signal* slice;
    const Vector* morph;
    const Vector* hrv;
    Vector labels;
};

struct TrainParams {
    int epochs = 20;
    int bce_warmup_epochs = 8;
    int batch = 32;
    double lr_peak = 9e-4;
    double lr_floor = 1e-6;
    AdamWParams adamw;
    double ema_decay = 0.999;
    double gamma_neg = 2.5;
    double gamma_pos = 0.0;
    double grad_clip = 0.0;  // global-norm clip; 0 disables
    std::uint64_t seed = 0;
};

struct EpochLog {
    int epoch = 0;
    double lr = 0;          // learning rate at the epoch's last step
    double loss = 0;        // mean batch loss
    std::string loss_kind;  // "bce" or "asl"
    double train_macro_roc_auc = 0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    EmaState ema;
    long steps = 0;
    bool diverged = false;
    std::string message;
};

// Mini-batch training over slices with a seeded shuffle per epoch: BCE for
// the warmup epochs, ASL afterwards, cosine schedule per step, AdamW, EMA.
// On a non-finite loss the parameters of the last completed epoch are
// restored and `diverged` is set.
TrainResult train_model(EcgModel& model, std::span<const TrainSample> samples, const TrainParams& params,
                        const std::function<void(const EpochLog&)>& on_epoch = {});

std::string training_log_csv(const std::vector<EpochLog>& log);

}  // namespace rhythmorph
