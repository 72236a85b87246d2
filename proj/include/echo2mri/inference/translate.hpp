#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <json.hpp>
#include <concepts>
#include <vector>

#include "echo2mri/dataio/triplets.hpp"
#include "echo2mri/inference/decode.hpp"
#include "echo2mri/tensor.hpp"

namespace echo2mri::inference {

struct Timing {
  double total_seconds = 0.0;
  double seconds_per_frame = 0.0;
  std::vector<double> triplet_seconds;
};

struct TranslationResult {
  FrameSequence frames;
  std::vector<int> per_frame_contributions;
  Timing timing;
};

/// Anything callable as Tensor<float>(const Tensor<float>&) mapping a
/// (3, H, W) triplet to a (3, H, W) triplet.
template <typename G>
concept TripletGenerator = requires(G& g, const Tensor<float>& t) {
  { g(t) } -> std::convertible_to<Tensor<float>>;
};

namespace detail {

template <TripletGenerator G>
dataio::TemporalTriplet translate_one(G& g, const dataio::TemporalTriplet& tr) {
  const Tensor<float> out = g(dataio::to_tensor<float>(tr));
  if (out.channels() != 3 || out.height() != tr.channels[0].height() || out.width() != tr.channels[0].width()) {
    throw ShapeError("generator changed the triplet shape to " + out.shape().str());
  }
  return dataio::from_tensor(out, tr.center_time);
}

}  // namespace detail

/// Encodes all N-2 triplets, translates each and overlap-averages them back
/// into N frames. Frames are expected in the generator's [-1, 1] range.
template <TripletGenerator G>
TranslationResult translate_sequence(const FrameSequence& seq, G& generator) {
  using clock = std::chrono::steady_clock;
  const auto triplets = dataio::make_temporal_triplets(seq);
  TranslationResult r;
  const auto start = clock::now();
  std::vector<dataio::TemporalTriplet> translated;
  translated.reserve(triplets.size());
  for (const auto& tr : triplets) {
    const auto t0 = clock::now();
    translated.push_back(detail::translate_one(generator, tr));
    r.timing.triplet_seconds.push_back(std::chrono::duration<double>(clock::now() - t0).count());
  }
  r.frames = temporal_average(translated, static_cast<int>(seq.size()));
  r.timing.total_seconds = std::chrono::duration<double>(clock::now() - start).count();
  r.timing.seconds_per_frame = r.timing.total_seconds / static_cast<double>(seq.size());
  r.per_frame_contributions = contribution_counts(static_cast<int>(seq.size()));
  return r;
}

/// Frame-by-frame translation. Each arriving frame completes the window
/// centred one step earlier; output t is final once frame t+2 has arrived
/// (or at finish()). Outputs equal translate_sequence bit for bit.
template <TripletGenerator G>
class StreamingTranslator {
 public:
  explicit StreamingTranslator(G& generator) : generator_(generator) {}

  /// Returns the frames that became final with this input, in order.
  std::vector<Frame> push(const Frame& frame) {
    window_.push_back(frame);
    ++received_;
    std::vector<Frame> ready;
    if (window_.size() < 3) return ready;
    if (window_.size() > 3) window_.pop_front();
    const int center = received_ - 2;
    dataio::TemporalTriplet tr{{window_[0], window_[1], window_[2]}, center};
    for (int k = 0; k < 3; ++k) tr.channels[k].time_index = center - 1 + k;
    acc_.add(detail::translate_one(generator_, tr));
    // Time center - 1 has now seen its last contributing window.
    while (emitted_ < center) ready.push_back(acc_.take(emitted_++));
    return ready;
  }

  /// Flushes the tail. Throws if fewer than three frames were pushed.
  std::vector<Frame> finish() {
    if (received_ < 3) throw SequenceTooShortError(static_cast<std::size_t>(received_));
    std::vector<Frame> ready;
    while (emitted_ < received_) ready.push_back(acc_.take(emitted_++));
    return ready;
  }

  int received() const noexcept { return received_; }
  int emitted() const noexcept { return emitted_; }

 private:
  G& generator_;
  std::deque<Frame> window_;
  detail::OverlapAccumulator acc_;
  int received_ = 0;
  int emitted_ = 0;
};

struct ThroughputStats {
  double mean = 0.0;  ///< seconds per frame
  double p50 = 0.0;
  double p95 = 0.0;
  double fps = 0.0;
  int repeats = 0;
  int frames = 0;
};

/// Nearest-rank percentile of an ascending sample.
inline double percentile(const std::vector<double>& sorted, double q) {
  const auto rank = static_cast<std::size_t>(std::ceil(q * sorted.size()));
  return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

inline ThroughputStats summarize(std::vector<double> per_frame, int frames) {
  if (per_frame.empty()) throw InputError("no timing samples");
  std::sort(per_frame.begin(), per_frame.end());
  ThroughputStats s;
  s.repeats = static_cast<int>(per_frame.size());
  s.frames = frames;
  double total = 0.0;
  for (double v : per_frame) total += v;
  s.mean = total / per_frame.size();
  s.p50 = percentile(per_frame, 0.5);
  s.p95 = percentile(per_frame, 0.95);
  s.fps = 1.0 / s.mean;
  return s;
}

/// One untimed warm-up pass, then `repeats` timed translations of `seq`.
template <TripletGenerator G>
ThroughputStats benchmark_throughput(const FrameSequence& seq, G& generator, int repeats) {
  if (repeats < 1) throw InputError("repeats must be >= 1");
  translate_sequence(seq, generator);
  std::vector<double> per_frame;
  for (int i = 0; i < repeats; ++i) per_frame.push_back(translate_sequence(seq, generator).timing.seconds_per_frame);
  return summarize(std::move(per_frame), static_cast<int>(seq.size()));
}

inline void to_json(nlohmann::json& j, const ThroughputStats& s) {
  j = {{"mean_seconds_per_frame", s.mean},
       {"p50_seconds_per_frame", s.p50},
       {"p95_seconds_per_frame", s.p95},
       {"fps", s.fps},
       {"repeats", s.repeats},
       {"frames", s.frames}};
}

inline void to_json(nlohmann::json& j, const Timing& t) {
  j = {{"total_seconds", t.total_seconds},
       {"seconds_per_frame", t.seconds_per_frame},
       {"triplet_seconds", t.triplet_seconds}};
}

}  // namespace echo2mri::inference
