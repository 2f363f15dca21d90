#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "ouro/grid.hpp"
#include "ouro/rng.hpp"
#include "ouro/schedule.hpp"

namespace ouro {

struct FrameLatent {
  Grid data;
  int noise_level = 0;  // 0 == clean
  long frame_index = 0;
};

// A contiguous run of f queue slots handed to the denoiser together.
struct Window {
  std::span<const FrameLatent> latents;
  std::vector<int> timesteps;
  int window_index = 0;
};

// Fixed-length FIFO of frame latents at noise levels 1..T (head cleanest).
// Between advance() and enqueue_tail() the queue is "open" with T-1 slots.
class DiagonalQueue {
 public:
  DiagonalQueue(std::vector<FrameLatent> slots, int window, long tau = 0)
      : slots_(std::move(slots)), T_(static_cast<int>(slots_.size())), f_(window), tau_(tau) {
    if (f_ < 1 || T_ % f_ != 0) {
      throw ConfigError("f", "queue length " + std::to_string(T_) +
                                 " is not a multiple of the window length " + std::to_string(f_));
    }
    validate();
  }

  int length() const noexcept { return T_; }
  int window() const noexcept { return f_; }
  long tau() const noexcept { return tau_; }
  bool is_open() const noexcept { return static_cast<int>(slots_.size()) == T_ - 1; }
  std::span<const FrameLatent> slots() const noexcept { return slots_; }
  const FrameLatent& back() const { return slots_.back(); }

  // Checks the level ladder, consecutive frame indices and finiteness.
  void validate() const {
    const int expected = is_open() ? T_ - 1 : T_;
    if (static_cast<int>(slots_.size()) != expected) {
      throw QueueInvariantError("queue holds " + std::to_string(slots_.size()) + " slots, expected " +
                                std::to_string(expected));
    }
    for (int k = 0; k < expected; ++k) {
      const FrameLatent& s = slots_[static_cast<std::size_t>(k)];
      if (s.noise_level != k + 1) {
        throw QueueInvariantError("slot " + std::to_string(k) + " has noise level " +
                                  std::to_string(s.noise_level) + ", expected " +
                                  std::to_string(k + 1));
      }
      if (s.frame_index != tau_ + k + 1) {
        throw QueueInvariantError("slot " + std::to_string(k) + " has frame index " +
                                  std::to_string(s.frame_index) + ", expected " +
                                  std::to_string(tau_ + k + 1));
      }
      if (!s.data.all_finite()) {
        throw QueueInvariantError("slot " + std::to_string(k) + " holds non-finite values");
      }
    }
  }

  // Takes the one-step-denoised slots, pops the (now clean) head and shifts
  // the rest toward it. Leaves the queue open.
  FrameLatent advance(std::vector<Grid> denoised) {
    if (is_open()) throw QueueInvariantError("advance on an open queue");
    if (static_cast<int>(denoised.size()) != T_) {
      throw DimensionError("advance expects " + std::to_string(T_) + " denoised latents, got " +
                           std::to_string(denoised.size()));
    }
    for (int k = 0; k < T_; ++k) {
      denoised[static_cast<std::size_t>(k)].require_same_shape(slots_[static_cast<std::size_t>(k)].data,
                                                               "advance");
    }
    FrameLatent head{std::move(denoised[0]), 0, slots_[0].frame_index};
    std::vector<FrameLatent> next;
    next.reserve(static_cast<std::size_t>(T_));
    for (int k = 1; k < T_; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      next.push_back(FrameLatent{std::move(denoised[ku]), k, slots_[ku].frame_index});
    }
    slots_ = std::move(next);
    ++tau_;
    return head;
  }

  void enqueue_tail(FrameLatent tail) {
    if (!is_open()) throw QueueInvariantError("enqueue_tail on a full queue");
    if (tail.noise_level != T_) {
      throw QueueInvariantError("tail must carry noise level " + std::to_string(T_) + ", got " +
                                std::to_string(tail.noise_level));
    }
    if (tail.frame_index != slots_.back().frame_index + 1) {
      throw QueueInvariantError("tail frame index " + std::to_string(tail.frame_index) +
                                " does not follow " + std::to_string(slots_.back().frame_index));
    }
    tail.data.require_same_shape(slots_.back().data, "enqueue_tail");
    slots_.push_back(std::move(tail));
  }

  std::size_t bytes() const noexcept {
    std::size_t n = 0;
    for (const auto& s : slots_) n += s.data.size() * sizeof(double);
    return n;
  }

 private:
  std::vector<FrameLatent> slots_;
  int T_;
  int f_;
  long tau_;
};

// Populates the queue from f clean warm-up frames: slot k is warmup[min(k, f-1)]
// diffused to level k+1.
template <GridSampler Sampler>
DiagonalQueue init_queue(std::span<const Grid> warmup, int f, const NoiseSchedule& sched,
                         Sampler& noise) {
  if (f < 1 || static_cast<int>(warmup.size()) != f) {
    throw ConfigError("f", "warm-up must provide exactly f=" + std::to_string(f) +
                               " frames, got " + std::to_string(warmup.size()));
  }
  const int T = sched.steps();
  std::vector<FrameLatent> slots;
  slots.reserve(static_cast<std::size_t>(T));
  for (int k = 0; k < T; ++k) {
    const Grid& src = warmup[static_cast<std::size_t>(std::min(k, f - 1))];
    slots.push_back(FrameLatent{forward_diffuse(src, k + 1, noise.sample(src.shape()), sched), k + 1,
                                static_cast<long>(k) + 1});
  }
  return DiagonalQueue(std::move(slots), f, 0);
}

inline std::vector<Window> partition_windows(const DiagonalQueue& q) {
  const auto slots = q.slots();
  const int f = q.window();
  const int count = static_cast<int>(slots.size()) / f;
  std::vector<Window> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int w = 0; w < count; ++w) {
    Window win;
    win.latents = slots.subspan(static_cast<std::size_t>(w) * f, static_cast<std::size_t>(f));
    win.window_index = w;
    for (const auto& l : win.latents) win.timesteps.push_back(l.noise_level);
    out.push_back(std::move(win));
  }
  return out;
}

}  // namespace ouro
