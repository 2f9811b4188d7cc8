#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "scn/tensor.hpp"

namespace scn {

namespace fs = std::filesystem;

/// 8-bit grayscale image, row-major.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::uint8_t fill = 0)
      : height(h), width(w), pixels(h * w, fill) {}
  std::uint8_t& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  bool operator==(const Image&) const = default;
};

class IngestionError : public Error {
 public:
  using Error::Error;
};

class DegenerateFrameError : public Error {
 public:
  using Error::Error;
};

// PGM (P2/P5) or PNG, detected from the file's magic bytes.
Image read_image(const fs::path& path);
void write_pgm(const fs::path& path, const Image& img);
void write_png(const fs::path& path, const Image& img);

constexpr std::size_t kAlignedHeight = 64;
constexpr std::size_t kAlignedWidth = 44;
constexpr std::size_t kMinSequenceFrames = 15;

// Crop to the vertical extent of the foreground (pixels >= 128), rescale to
// the target height by nearest neighbour keeping the aspect ratio, and cut
// a target-width window centred on the foreground column centroid, zero
// padded. Output pixels are 0 or 1.
Image align_image(const Image& raw, std::size_t height = kAlignedHeight,
                  std::size_t width = kAlignedWidth);
// The aligned frame as a [1, height, width] tensor of {0, 1}.
Tensor align_frame(const Image& raw, std::size_t height = kAlignedHeight,
                   std::size_t width = kAlignedWidth);

enum class Split { train, gallery, probe, unused };
std::string to_string(Split s);

struct ProbeSet {
  std::string name;
  std::string condition;
  std::vector<int> runs;
};

/// Which subjects train, and which runs of the rest form gallery and probes.
struct Protocol {
  std::string name;
  int train_last_subject = 74;  // subjects 1..this train
  std::string gallery_condition = "nm";
  std::vector<int> gallery_runs{1, 2, 3, 4};
  std::vector<ProbeSet> probes;

  static Protocol casia_b();
  static Protocol ou_mvlp();
  // Held-out subjects after the first `train_subjects`; gallery nm-01..04,
  // probes nm-05..08.
  static Protocol synthetic(int train_subjects = 12);
  static Protocol by_name(const std::string& name, int synthetic_train_subjects = 12);

  // Split of a sequence; for probes, also the probe-set name.
  Split split_of(int subject, const std::string& condition, int run,
                 std::string* probe_set = nullptr) const;
};

struct SequenceRecord {
  int subject = 0;
  std::string condition;
  int run = 0;
  int view = 0;
  fs::path path;
  std::vector<fs::path> frames;  // sorted
  Split split = Split::unused;
  std::string probe_set;
};

struct DatasetIndex {
  Protocol protocol;
  std::vector<SequenceRecord> records;

  std::vector<const SequenceRecord*> select(Split split) const;
  std::vector<int> views() const;
};

// root/SSS/cond-RR/VVV/<frames>, e.g. 001/nm-01/000/001.png.
DatasetIndex load_casia_layout(const fs::path& root, const Protocol& protocol);
// root/SSSSS/VVV_RR/<frames>; every sequence has condition "nm".
DatasetIndex load_ou_mvlp_layout(const fs::path& root, const Protocol& protocol);

/// Aligned silhouettes of one sequence, pixels in {0, 1}.
struct FrameSequence {
  int subject = 0;
  std::string condition;
  int run = 0;
  int view = 0;
  std::vector<Image> frames;
  std::size_t dropped = 0;  // empty frames skipped during alignment

  std::size_t size() const { return frames.size(); }
};

FrameSequence load_sequence(const SequenceRecord& record);
// PGM/PNG files of one sequence directory, sorted by name.
std::vector<fs::path> frame_files(const fs::path& dir);
// [n, 1, H, W] tensor of the chosen frames (all when indices is empty).
Tensor to_tensor(const FrameSequence& seq, const std::vector<std::size_t>& indices = {});

class DiscardedSequenceError : public Error {
 public:
  using Error::Error;
};

// Frame indices of a training segment: a uniformly placed contiguous window
// when n >= target, otherwise the sequence repeated cyclically up to
// target. Sequences shorter than kMinSequenceFrames are discarded.
std::vector<std::size_t> segment_indices(std::size_t n, std::size_t target, std::mt19937_64& rng);
FrameSequence sample_segment(const FrameSequence& seq, std::size_t target, std::uint64_t seed);

struct BatchSpec {
  std::size_t p = 4;
  std::size_t k = 4;
  std::size_t segment_len = 30;

  void validate() const;
};

struct Batch {
  std::vector<std::size_t> sequences;  // indices into the sampler's pool
  std::vector<std::vector<std::size_t>> frames;
  std::vector<int> labels;
};

// Draws p distinct subjects and k segments for each. Batch t depends only
// on (seed, t), so a resumed run sees the same stream.
class BatchSampler {
 public:
  BatchSampler(const std::vector<FrameSequence>& pool, BatchSpec spec, std::uint64_t seed);
  Batch batch(std::uint64_t step) const;
  std::size_t subjects() const { return by_subject_.size(); }

 private:
  const std::vector<FrameSequence>* pool_;
  BatchSpec spec_;
  std::uint64_t seed_;
  std::vector<std::pair<int, std::vector<std::size_t>>> by_subject_;
};

// Procedural biped silhouettes in the CASIA layout.
struct SynthSpec {
  int subjects = 20;
  std::vector<int> views{0, 30, 60, 90};
  int sequences = 8;
  int frames = 40;
  int canvas_height = 100;
  int canvas_width = 80;
  double noise = 0.05;  // flip probability of pixels near the outline
  bool twins = true;     // subjects 1 and 2 are phase twins
  int twin_period = 20;
  std::uint64_t seed = 1;

  void validate() const;
};

struct GaitParams {
  double head_radius;
  double torso_half_width;
  double torso_fraction;  // torso length / body height
  double leg_fraction;    // leg length / body height
  double thigh_share;     // thigh / leg length
  double leg_thickness;
  double arm_thickness;
  double hip_swing;   // radians
  double knee_flex;   // radians
  double arm_swing;   // radians
  int period;         // frames per gait cycle
  bool reversed = false;  // phase index runs backwards
};

std::vector<GaitParams> synth_subjects(const SynthSpec& spec);
// Frame of a subject at integer phase index j (0..period-1) seen from view.
Image render_frame(const GaitParams& g, int phase_index, int view, const SynthSpec& spec);
// Phase index of frame t of a sequence starting at start.
int phase_index(const GaitParams& g, int start, int t);
// Renders every sequence under root; returns the number of frames written.
std::size_t synth_generate(const SynthSpec& spec, const fs::path& root);

}  // namespace scn
