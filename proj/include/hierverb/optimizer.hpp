#pragma once

// Adam with a linear learning-rate schedule (optional warmup, then decay to
// zero over the configured step budget). Encoder and verbalizer parameters
// carry separate base rates.

#include <cmath>
#include <vector>

#include "hierverb/common.hpp"
#include "hierverb/encoding.hpp"
#include "hierverb/losses.hpp"
#include "hierverb/verbalizer.hpp"

namespace hierverb {

struct AdamConfig {
    double lr_encoder = 5e-5;
    double lr_head = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int warmup_steps = 0;
    int total_steps = 1;
};

class Adam {
public:
    Adam(const EncoderParams& enc, const VerbalizerHead& head, const AdamConfig& cfg)
        : cfg_(cfg), m_(Gradients::zeros(enc, head)), v_(Gradients::zeros(enc, head)) {
        require(cfg.total_steps >= 1, "adam: total_steps must be >= 1");
        require(cfg.warmup_steps >= 0 && cfg.warmup_steps < cfg.total_steps,
                "adam: warmup_steps must be in [0, total_steps)");
    }

    // Linear warmup then linear decay to zero; step_ counts completed updates.
    double schedule() const {
        if (cfg_.warmup_steps > 0 && step_ < cfg_.warmup_steps) {
            return static_cast<double>(step_) / cfg_.warmup_steps;
        }
        const double remaining = static_cast<double>(cfg_.total_steps - step_) /
                                 static_cast<double>(cfg_.total_steps - cfg_.warmup_steps);
        return remaining > 0.0 ? remaining : 0.0;
    }

    double current_lr_encoder() const { return cfg_.lr_encoder * schedule(); }
    double current_lr_head() const { return cfg_.lr_head * schedule(); }

    void step(EncoderParams& enc, VerbalizerHead& head, const Gradients& g) {
        const double lr_enc = current_lr_encoder();
        const double lr_head = current_lr_head();
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, step_);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, step_);

        auto update = [&](double* p, double* m, double* v, const double* grad, std::size_t count,
                          double lr) {
            for (std::size_t i = 0; i < count; ++i) {
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * grad[i];
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                p[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        };

        update(enc.embed.data.data(), m_.embed.data.data(), v_.embed.data.data(),
               g.embed.data.data(), g.embed.data.size(), lr_enc);
        for (std::size_t d = 0; d < enc.proj.size(); ++d) {
            update(enc.proj[d].data.data(), m_.proj[d].data.data(), v_.proj[d].data.data(),
                   g.proj[d].data.data(), g.proj[d].data.size(), lr_enc);
            update(enc.shift[d].data(), m_.shift[d].data(), v_.shift[d].data(), g.shift[d].data(),
                   g.shift[d].size(), lr_enc);
        }
        for (std::size_t d = 0; d < head.weight.size(); ++d) {
            update(head.weight[d].data.data(), m_.weight[d].data.data(), v_.weight[d].data.data(),
                   g.weight[d].data.data(), g.weight[d].data.size(), lr_head);
            update(head.bias[d].data(), m_.bias[d].data(), v_.bias[d].data(), g.bias[d].data(),
                   g.bias[d].size(), lr_head);
        }
    }

    int steps_taken() const { return step_; }

private:
    AdamConfig cfg_;
    Gradients m_;
    Gradients v_;
    int step_ = 0;
};

}  // namespace hierverb
