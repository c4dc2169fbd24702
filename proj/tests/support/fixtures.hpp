#pragma once

#include "handover/svae.hpp"
#include "handover/synth.hpp"
#include "handover/timing.hpp"

namespace fixture {

// A few synthetic clips, enough for smoke-level training runs.
inline handover::Corpus tiny_corpus(int clips, std::uint64_t seed, int pairs = 2) {
    handover::SynthConfig cfg = handover::SynthConfig::with_total(clips);
    cfg.pair_count = pairs;
    return handover::synth_corpus(cfg, seed);
}

inline handover::SvaeConfig tiny_svae(int T = 4) {
    handover::SvaeConfig c;
    c.latent_dim = 2;
    c.hidden_dim = 8;
    c.embed_dim = 4;
    c.attention_heads = 2;
    c.num_experts = 6;
    c.T = T;
    c.stage1_epochs = 4;
    c.stage2_epochs = 4;
    c.stage2_kl_only_epochs = 2;
    c.recon_only_epochs = 2;
    c.lr_decay_start_epoch = 2;
    c.sched_sampling_ramp_epochs = 2;
    c.chunk_stride = 20;
    c.seed = 3;
    return c;
}

inline handover::TimingConfig tiny_timing(int T = 4) {
    handover::TimingConfig c;
    c.hidden_dim = 8;
    c.T = T;
    c.epochs = 3;
    c.window_stride = 5;
    c.seed = 4;
    return c;
}

}  // namespace fixture
