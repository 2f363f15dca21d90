#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ouro/attention.hpp"
#include "ouro/config.hpp"
#include "ouro/dump.hpp"
#include "ouro/freq.hpp"
#include "ouro/guidance.hpp"
#include "ouro/metrics.hpp"
#include "ouro/queue.hpp"
#include "ouro/rng.hpp"
#include "ouro/scene.hpp"
#include "ouro/schedule.hpp"
#include "ouro/toy_denoiser.hpp"

namespace ouro {

struct EmittedFrame {
  long output_index = 0;  // 0-based position in the video
  const Grid& latent;
  const Mask& subject_mask;  // scene ground truth for this position
};

struct CycleInfo {
  long cycle = 0;  // 0-based steady-state step
  const DiagonalQueue& queue;
  std::size_t state_bytes = 0;  // queue + bank + captures + prior cache + metric state
};

struct GenerateHooks {
  std::function<void(const EmittedFrame&)> on_frame;
  std::function<void(const CycleInfo&)> on_cycle;
};

struct GenerateStats {
  long cycles = 0;
  long forward_passes = 0;  // denoiser invocations, one per window
  long warmup_forward_passes = 0;
  bool bank_initialized = false;
  std::vector<std::string> diagnostics;
};

struct GenerateResult {
  MetricsReport metrics;
  GenerateStats stats;
};

namespace detail {

inline std::size_t matrix_bytes(const Matrix& m) { return static_cast<std::size_t>(m.size()) * sizeof(double); }

inline std::size_t capture_bytes(const std::vector<AttentionCapture>& caps) {
  std::size_t n = 0;
  for (const auto& c : caps) {
    n += matrix_bytes(c.q.tokens) + matrix_bytes(c.k.tokens) + matrix_bytes(c.v.tokens) +
         matrix_bytes(c.masked_keys.tokens) + c.subject_mask.mask.bits.size();
    for (const auto& m : c.cross_maps) n += matrix_bytes(m.map);
  }
  return n;
}

// Scene renders for the frames currently in flight, keyed by output index.
class PriorCache {
 public:
  explicit PriorCache(const SceneSpec& scene) : scene_(scene) {}

  const RenderedFrame& at(long output_index) {
    auto it = frames_.find(output_index);
    if (it == frames_.end()) it = frames_.emplace(output_index, render_frame(scene_, output_index)).first;
    return it->second;
  }
  void drop_before(long output_index) { frames_.erase(frames_.begin(), frames_.lower_bound(output_index)); }

  std::size_t bytes() const {
    std::size_t n = 0;
    for (const auto& [k, f] : frames_) n += f.latent.size() * sizeof(double) + f.subject_mask.bits.size();
    return n;
  }

 private:
  const SceneSpec& scene_;
  std::map<long, RenderedFrame> frames_;
};

}  // namespace detail

// Full long-video generation: parallel warm-up over f frames, then the
// diagonal queue loop (denoise windows, guide the tail, DDIM-step every slot,
// emit the head, refresh the subject bank, enqueue a new tail).
inline GenerateResult generate(const RunConfig& cfg, const GenerateHooks& hooks = {}) {
  validate(cfg);
  const NoiseSchedule sched = build_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
  const int T = cfg.T;
  const int f = cfg.f;
  const Shape shape = cfg.scene.shape;
  const bool toy = cfg.denoiser == DenoiserKind::toy;

  std::optional<ToyDenoiser> model;
  if (toy) model.emplace(cfg.model, cfg.seed);
  const ConditionEmbedding cond = make_condition(cfg.subject_ids, cfg.seed, cfg.model.token_width);

  NoiseStream warm_noise(cfg.seed, "warmup");
  NoiseStream init_noise(cfg.seed, "queue/init");
  NoiseStream tail_noise(cfg.seed, "tail/eta");
  NoiseStream renoise_noise(cfg.seed, "tail/renoise");

  detail::PriorCache priors(cfg.scene);
  MetricsAccumulator metrics(cfg.low_pass_threshold);
  GenerateResult result;
  long emitted = 0;

  auto emit = [&](const Grid& latent) {
    const RenderedFrame& gt = priors.at(emitted);
    metrics.push(latent, gt.subject_mask);
    if (hooks.on_frame) hooks.on_frame(EmittedFrame{emitted, latent, gt.subject_mask});
    ++emitted;
  };

  // Runs the denoiser over one window of frames at the given output positions.
  auto denoise = [&](std::span<const Grid> latents, std::span<const int> timesteps, long first_output,
                     const MaskedKeyValues* refs) {
    std::vector<Grid> means;
    means.reserve(latents.size());
    for (std::size_t i = 0; i < latents.size(); ++i) {
      means.push_back(priors.at(first_output + static_cast<long>(i)).latent);
    }
    if (toy) {
      DenoiseRequest req{latents, timesteps, means, cfg.scene.sigma_d, &sched, refs};
      return model->forward(req, cond);
    }
    DenoiseOutput out;
    for (std::size_t i = 0; i < latents.size(); ++i) {
      out.eps.push_back(analytic_gaussian_epsilon(latents[i], timesteps[i], means[i], cfg.scene.sigma_d, sched));
    }
    return out;
  };

  // Warm-up: plain parallel DDIM over f frames, no ablated component active.
  std::vector<Grid> warm(static_cast<std::size_t>(f));
  for (auto& g : warm) g = warm_noise.sample(shape);
  std::vector<AttentionCapture> prev_captures;
  for (int t = T; t >= 1; --t) {
    const std::vector<int> ts(static_cast<std::size_t>(f), t);
    DenoiseOutput out = denoise(warm, ts, 0, nullptr);
    ++result.stats.warmup_forward_passes;
    for (int i = 0; i < f; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      warm[iu] = ddim_step(warm[iu], out.eps[iu], t, sched);
    }
    if (t == 1) prev_captures = std::move(out.captures);
  }
  for (const auto& g : warm) {
    if (!g.all_finite()) throw NumericalError(0, "warm-up produced non-finite latents");
  }
  for (int i = 0; i < f && emitted < cfg.n_frames; ++i) emit(warm[static_cast<std::size_t>(i)]);
  if (emitted >= cfg.n_frames) {
    result.metrics = metrics.report();
    return result;
  }

  DiagonalQueue queue = init_queue(std::span<const Grid>(warm), f, sched, init_noise);
  warm.clear();
  warm.shrink_to_fit();

  const bool guidance_on = toy && cfg.guidance_enabled;
  const KeyProjection proj = toy ? model->key_projection() : KeyProjection{};
  const GuidanceConfig gcfg{cfg.gamma0, cfg.head_span, cfg.tail_span};
  SubjectBank bank;
  bank.lambda = cfg.lambda;
  bool bank_failed = false;

  // Queue frame index q (1-based) is output position f + q - 1.
  const auto output_of = [f](long frame_index) { return static_cast<long>(f) + frame_index - 1; };

  for (long cycle = 0; emitted < cfg.n_frames; ++cycle) {
    MaskedKeyValues refs;
    const bool use_refs = toy && cfg.sacfa_enabled;
    if (use_refs) {
      const std::size_t span = std::min(prev_captures.size(), static_cast<std::size_t>(cfg.sacfa_frame_span));
      std::vector<MaskedFrame> frames;
      for (std::size_t i = prev_captures.size() - span; i < prev_captures.size(); ++i) {
        const auto& c = prev_captures[i];
        frames.push_back(MaskedFrame{&c.k, &c.v, &c.subject_mask.mask});
      }
      refs = collect_masked_kv(frames);
    }

    std::vector<Grid> eps;
    std::vector<AttentionCapture> captures;
    eps.reserve(static_cast<std::size_t>(T));
    for (const Window& win : partition_windows(queue)) {
      std::vector<Grid> latents;
      latents.reserve(win.latents.size());
      for (const auto& l : win.latents) latents.push_back(l.data);
      DenoiseOutput out =
          denoise(latents, win.timesteps, output_of(win.latents.front().frame_index), use_refs ? &refs : nullptr);
      ++result.stats.forward_passes;
      for (auto& e : out.eps) eps.push_back(std::move(e));
      for (auto& c : out.captures) captures.push_back(std::move(c));
    }

    const auto slots = queue.slots();
    const std::span<const AttentionCapture> head_caps =
        toy ? std::span<const AttentionCapture>(captures).first(static_cast<std::size_t>(cfg.head_span))
            : std::span<const AttentionCapture>();

    bool fresh_bank = false;
    if (guidance_on && !bank.initialized && !bank_failed) {
      bank = init_bank(head_caps, cfg.bank_rows, cfg.lambda);
      if (bank.initialized) {
        fresh_bank = true;
      } else {
        bank_failed = true;
        result.stats.diagnostics.push_back(bank.diagnostic);
      }
    }

    std::vector<Grid> denoised;
    denoised.reserve(static_cast<std::size_t>(T));
    for (int k = 0; k < T; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      const FrameLatent& slot = slots[ku];
      if (guidance_on && bank.initialized && k >= T - cfg.tail_span) {
        const Grid grad = guidance_gradient(slot.data, captures[ku].subject_mask.mask, bank, proj);
        const FrameLatent guided = apply_guidance(slot, grad, slot.noise_level, gcfg, sched);
        denoised.push_back(ddim_step(guided.data, eps[ku], slot.noise_level, sched));
      } else {
        denoised.push_back(ddim_step(slot.data, eps[ku], slot.noise_level, sched));
      }
      if (!denoised.back().all_finite()) {
        throw NumericalError(cycle, "non-finite latent in queue slot " + std::to_string(k));
      }
    }

    FrameLatent head = queue.advance(std::move(denoised));
    emit(head.data);

    if (guidance_on && bank.initialized && !fresh_bank) bank = update_bank(std::move(bank), head_caps);

    FrameLatent tail;
    if (cfg.tail_mode == TailMode::coherent) {
      const Grid ren_eps = renoise_noise.sample(shape);
      const Grid eta = tail_noise.sample(shape);
      tail = coherent_tail_sample(queue.back(), sched, ren_eps, eta, cfg.low_pass_threshold);
    } else {
      tail = FrameLatent{tail_noise.sample(shape), T, queue.back().frame_index + 1};
    }
    queue.enqueue_tail(std::move(tail));
    queue.validate();

    prev_captures = std::move(captures);
    priors.drop_before(std::min(emitted, output_of(queue.slots().front().frame_index)));
    ++result.stats.cycles;

    if (hooks.on_cycle) {
      const std::size_t bytes = queue.bytes() + detail::matrix_bytes(bank.k_ltm) +
                                detail::capture_bytes(prev_captures) + priors.bytes() + metrics.bytes();
      hooks.on_cycle(CycleInfo{cycle, queue, bytes});
    }
  }

  result.stats.bank_initialized = bank.initialized;
  result.metrics = metrics.report();
  return result;
}

struct DumpedRun {
  GenerateResult result;
  std::string dump_path;
};

inline DumpHeader dump_header_for(const RunConfig& cfg) {
  return DumpHeader{cfg.n_frames, cfg.scene.shape, config_hash(cfg), cfg.seed, "f32le"};
}

// generate() streaming frames straight into a VideoDump file.
inline DumpedRun generate_to_file(const RunConfig& cfg, const std::string& path) {
  validate(cfg);
  DumpWriter writer(path, dump_header_for(cfg));
  GenerateHooks hooks;
  hooks.on_frame = [&](const EmittedFrame& fr) { writer.write(fr.latent); };
  DumpedRun run{generate(cfg, hooks), path};
  writer.close();
  return run;
}

// In-memory variant for tests and the ablation harness.
inline std::pair<VideoDump, MetricsReport> generate_video(const RunConfig& cfg) {
  VideoDump dump{dump_header_for(cfg), {}};
  GenerateHooks hooks;
  hooks.on_frame = [&](const EmittedFrame& fr) { dump.frames.push_back(fr.latent); };
  GenerateResult r = generate(cfg, hooks);
  return {std::move(dump), r.metrics};
}

struct AblationRow {
  std::string label;
  RunConfig config;
  MetricsReport metrics;
};

// Component ablation: A Gaussian tail only, B coherent tail, C B + SACFA,
// D C + self-recurrent guidance. All rows share the seed.
inline std::vector<RunConfig> ablation_configs(const RunConfig& base) {
  std::vector<RunConfig> rows(4, base);
  const char* labels[4] = {"A", "B", "C", "D"};
  for (int i = 0; i < 4; ++i) {
    RunConfig& c = rows[static_cast<std::size_t>(i)];
    c.denoiser = DenoiserKind::toy;
    c.tail_mode = i == 0 ? TailMode::gaussian : TailMode::coherent;
    c.sacfa_enabled = i >= 2;
    c.guidance_enabled = i >= 3;
    c.run_id = base.run_id + "_" + labels[i];
  }
  return rows;
}

inline std::vector<AblationRow> run_ablation(const RunConfig& base) {
  std::vector<AblationRow> rows;
  const char* labels[4] = {"A", "B", "C", "D"};
  int i = 0;
  for (const RunConfig& c : ablation_configs(base)) {
    rows.push_back(AblationRow{labels[i++], c, generate(c).metrics});
  }
  return rows;
}

}  // namespace ouro
