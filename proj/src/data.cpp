#include "scn/data.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>

namespace scn {

// ---- image files -----------------------------------------------------------

namespace {

Image read_pgm(const fs::path& path, std::istream& in) {
  std::string magic;
  in >> magic;
  auto next_int = [&]() {
    for (;;) {
      in >> std::ws;
      if (in.peek() == '#') {
        std::string comment;
        std::getline(in, comment);
        continue;
      }
      long v = -1;
      in >> v;
      if (!in || v < 0) throw IngestionError(path.string() + ": malformed PGM header");
      return static_cast<std::size_t>(v);
    }
  };
  const std::size_t w = next_int(), h = next_int(), maxval = next_int();
  if (w == 0 || h == 0 || maxval == 0 || maxval > 255)
    throw IngestionError(path.string() + ": unsupported PGM geometry or depth");
  Image img(h, w);
  if (magic == "P5") {
    in.get();
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(h * w));
    if (!in) throw IngestionError(path.string() + ": truncated PGM data");
  } else {
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(next_int());
  }
  if (maxval != 255)
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(p * 255 / maxval);
  return img;
}

struct PngFile {
  std::FILE* f = nullptr;
  ~PngFile() {
    if (f) std::fclose(f);
  }
};

Image read_png(const fs::path& path) {
  PngFile file{std::fopen(path.c_str(), "rb")};
  if (!file.f) throw IngestionError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) throw IngestionError("libpng initialisation failed");
  Image img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IngestionError(path.string() + ": unreadable PNG");
  }
  png_init_io(png, file.f);
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  img = Image(png_get_image_height(png, info), png_get_image_width(png, info));
  rows.resize(img.height);
  for (std::size_t y = 0; y < img.height; ++y) rows[y] = img.pixels.data() + y * img.width;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace

Image read_image(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] == 'P' && (magic[1] == '5' || magic[1] == '2')) {
    in.seekg(0);
    return read_pgm(path, in);
  }
  if (static_cast<unsigned char>(magic[0]) == 0x89 && magic[1] == 'P') {
    in.close();
    return read_png(path);
  }
  throw IngestionError(path.string() + ": neither PGM nor PNG");
}

void write_pgm(const fs::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
}

void write_png(const fs::path& path, const Image& img) {
  PngFile file{std::fopen(path.c_str(), "wb")};
  if (!file.f) throw Error("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) throw Error("libpng initialisation failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("failed writing " + path.string());
  }
  png_init_io(png, file.f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() + y * img.width));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// ---- alignment -------------------------------------------------------------

Image align_image(const Image& raw, std::size_t height, std::size_t width) {
  std::size_t top = raw.height, bottom = 0;
  for (std::size_t y = 0; y < raw.height; ++y)
    for (std::size_t x = 0; x < raw.width; ++x)
      if (raw.at(y, x) >= 128) {
        top = std::min(top, y);
        bottom = y;
        break;
      }
  if (top == raw.height) throw DegenerateFrameError("frame has no foreground pixels");

  const std::size_t crop_h = bottom - top + 1;
  const double scale = static_cast<double>(height) / static_cast<double>(crop_h);
  const auto scaled_w =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(raw.width * scale)));
  auto src_of = [scale](std::size_t dst, std::size_t limit) {
    const auto s = static_cast<std::size_t>(std::floor((static_cast<double>(dst) + 0.5) / scale));
    return std::min(s, limit - 1);
  };
  Image scaled(height, scaled_w);
  double mass = 0.0, moment = 0.0;
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = top + src_of(y, crop_h);
    for (std::size_t x = 0; x < scaled_w; ++x)
      if (raw.at(sy, src_of(x, raw.width)) >= 128) {
        scaled.at(y, x) = 1;
        mass += 1.0;
        moment += static_cast<double>(x);
      }
  }
  if (mass == 0.0) throw DegenerateFrameError("foreground vanished after rescaling");

  const double cx = moment / mass;
  const long left = std::lround(cx - (static_cast<double>(width) - 1.0) / 2.0);
  Image out(height, width);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const long sx = left + static_cast<long>(x);
      if (sx >= 0 && sx < static_cast<long>(scaled_w))
        out.at(y, x) = scaled.at(y, static_cast<std::size_t>(sx));
    }
  return out;
}

Tensor align_frame(const Image& raw, std::size_t height, std::size_t width) {
  const Image a = align_image(raw, height, width);
  Tensor t({1, height, width});
  for (std::size_t i = 0; i < a.pixels.size(); ++i) t[i] = a.pixels[i];
  return t;
}

// ---- protocols and layouts ---------------------------------------------------

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::gallery: return "gallery";
    case Split::probe: return "probe";
    case Split::unused: return "unused";
  }
  return "?";
}

Protocol Protocol::casia_b() {
  Protocol p;
  p.name = "casia-b";
  p.train_last_subject = 74;
  p.probes = {{"NM", "nm", {5, 6}}, {"BG", "bg", {1, 2}}, {"CL", "cl", {1, 2}}};
  return p;
}

Protocol Protocol::ou_mvlp() {
  Protocol p;
  p.name = "ou-mvlp";
  p.train_last_subject = 5153;
  p.gallery_runs = {0};
  p.probes = {{"NM", "nm", {1}}};
  return p;
}

Protocol Protocol::synthetic(int train_subjects) {
  Protocol p;
  p.name = "synthetic";
  p.train_last_subject = train_subjects;
  p.probes = {{"NM", "nm", {5, 6, 7, 8}}};
  return p;
}

Protocol Protocol::by_name(const std::string& name, int synthetic_train_subjects) {
  if (name == "casia-b") return casia_b();
  if (name == "ou-mvlp") return ou_mvlp();
  if (name == "synthetic") return synthetic(synthetic_train_subjects);
  throw ConfigError("unknown protocol '" + name + "' (expected casia-b, ou-mvlp, synthetic)");
}

Split Protocol::split_of(int subject, const std::string& condition, int run,
                         std::string* probe_set) const {
  if (subject <= train_last_subject) return Split::train;
  auto has = [](const std::vector<int>& runs, int r) {
    return std::find(runs.begin(), runs.end(), r) != runs.end();
  };
  if (condition == gallery_condition && has(gallery_runs, run)) return Split::gallery;
  for (const auto& ps : probes)
    if (condition == ps.condition && has(ps.runs, run)) {
      if (probe_set) *probe_set = ps.name;
      return Split::probe;
    }
  return Split::unused;
}

std::vector<const SequenceRecord*> DatasetIndex::select(Split split) const {
  std::vector<const SequenceRecord*> out;
  for (const auto& r : records)
    if (r.split == split) out.push_back(&r);
  return out;
}

std::vector<int> DatasetIndex::views() const {
  std::set<int> v;
  for (const auto& r : records) v.insert(r.view);
  return {v.begin(), v.end()};
}

namespace {

bool is_frame_file(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".png" || ext == ".pgm" || ext == ".PNG" || ext == ".PGM";
}

std::vector<fs::path> sorted_dirs(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<fs::path> sorted_frames(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_frame_file(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

void finish(DatasetIndex& index, const std::vector<std::string>& bad, const fs::path& root) {
  if (!bad.empty()) {
    std::ostringstream msg;
    msg << "malformed dataset layout under " << root.string() << "; unparsed paths:";
    for (std::size_t i = 0; i < bad.size() && i < 20; ++i) msg << "\n  " << bad[i];
    if (bad.size() > 20) msg << "\n  ... " << bad.size() - 20 << " more";
    throw IngestionError(msg.str());
  }
  if (index.records.empty()) throw IngestionError("no sequences found under " + root.string());
  for (auto& r : index.records) r.split = index.protocol.split_of(r.subject, r.condition, r.run, &r.probe_set);
}

}  // namespace

DatasetIndex load_casia_layout(const fs::path& root, const Protocol& protocol) {
  if (!fs::is_directory(root)) throw IngestionError("dataset root " + root.string() + " is not a directory");
  DatasetIndex index;
  index.protocol = protocol;
  std::vector<std::string> bad;
  const std::regex subject_re("[0-9]{3}"), cond_re("([a-z]+)-([0-9]{2})"), view_re("[0-9]{3}");
  for (const auto& sdir : sorted_dirs(root)) {
    const auto sname = sdir.filename().string();
    if (!std::regex_match(sname, subject_re)) {
      bad.push_back(sdir.string());
      continue;
    }
    for (const auto& cdir : sorted_dirs(sdir)) {
      std::smatch m;
      const auto cname = cdir.filename().string();
      if (!std::regex_match(cname, m, cond_re)) {
        bad.push_back(cdir.string());
        continue;
      }
      for (const auto& vdir : sorted_dirs(cdir)) {
        const auto vname = vdir.filename().string();
        if (!std::regex_match(vname, view_re)) {
          bad.push_back(vdir.string());
          continue;
        }
        SequenceRecord r;
        r.subject = std::stoi(sname);
        r.condition = m[1];
        r.run = std::stoi(m[2]);
        r.view = std::stoi(vname);
        r.path = vdir;
        r.frames = sorted_frames(vdir);
        if (r.frames.empty()) {
          bad.push_back(vdir.string() + " (no frames)");
          continue;
        }
        index.records.push_back(std::move(r));
      }
    }
  }
  finish(index, bad, root);
  return index;
}

DatasetIndex load_ou_mvlp_layout(const fs::path& root, const Protocol& protocol) {
  if (!fs::is_directory(root)) throw IngestionError("dataset root " + root.string() + " is not a directory");
  DatasetIndex index;
  index.protocol = protocol;
  std::vector<std::string> bad;
  const std::regex subject_re("[0-9]{5}"), seq_re("([0-9]{3})_([0-9]{2})");
  for (const auto& sdir : sorted_dirs(root)) {
    const auto sname = sdir.filename().string();
    if (!std::regex_match(sname, subject_re)) {
      bad.push_back(sdir.string());
      continue;
    }
    for (const auto& qdir : sorted_dirs(sdir)) {
      std::smatch m;
      const auto qname = qdir.filename().string();
      if (!std::regex_match(qname, m, seq_re)) {
        bad.push_back(qdir.string());
        continue;
      }
      SequenceRecord r;
      r.subject = std::stoi(sname);
      r.condition = "nm";
      r.view = std::stoi(m[1]);
      r.run = std::stoi(m[2]);
      r.path = qdir;
      r.frames = sorted_frames(qdir);
      if (r.frames.empty()) {
        bad.push_back(qdir.string() + " (no frames)");
        continue;
      }
      index.records.push_back(std::move(r));
    }
  }
  finish(index, bad, root);
  return index;
}

std::vector<fs::path> frame_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IngestionError(dir.string() + " is not a directory");
  return sorted_frames(dir);
}

FrameSequence load_sequence(const SequenceRecord& record) {
  FrameSequence seq;
  seq.subject = record.subject;
  seq.condition = record.condition;
  seq.run = record.run;
  seq.view = record.view;
  for (const auto& f : record.frames) {
    try {
      seq.frames.push_back(align_image(read_image(f)));
    } catch (const DegenerateFrameError&) {
      ++seq.dropped;
    }
  }
  return seq;
}

Tensor to_tensor(const FrameSequence& seq, const std::vector<std::size_t>& indices) {
  std::vector<std::size_t> all;
  const auto& idx = indices.empty() ? (all.resize(seq.size()),
                                       std::iota(all.begin(), all.end(), std::size_t{0}), all)
                                    : indices;
  if (idx.empty()) throw SequenceTooShortError("sequence has no frames");
  const std::size_t h = seq.frames[0].height, w = seq.frames[0].width;
  Tensor t({idx.size(), 1, h, w});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const Image& f = seq.frames.at(idx[i]);
    std::copy(f.pixels.begin(), f.pixels.end(), t.data() + i * h * w);
  }
  return t;
}

// ---- sampling ---------------------------------------------------------------

std::vector<std::size_t> segment_indices(std::size_t n, std::size_t target,
                                         std::mt19937_64& rng) {
  if (n < kMinSequenceFrames)
    throw DiscardedSequenceError("sequence of " + std::to_string(n) + " frames is below the " +
                                 std::to_string(kMinSequenceFrames) + "-frame minimum");
  std::vector<std::size_t> idx(target);
  if (n >= target) {
    std::uniform_int_distribution<std::size_t> start(0, n - target);
    std::iota(idx.begin(), idx.end(), start(rng));
  } else {
    for (std::size_t i = 0; i < target; ++i) idx[i] = i % n;
  }
  return idx;
}

FrameSequence sample_segment(const FrameSequence& seq, std::size_t target, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FrameSequence out = seq;
  out.frames.clear();
  for (std::size_t i : segment_indices(seq.size(), target, rng)) out.frames.push_back(seq.frames[i]);
  return out;
}

void BatchSpec::validate() const {
  if (p < 2 || k < 2)
    throw ConfigError("batch needs p >= 2 subjects and k >= 2 segments, got (" +
                      std::to_string(p) + ", " + std::to_string(k) + ")");
  if (segment_len == 0) throw ConfigError("segment length must be positive");
}

BatchSampler::BatchSampler(const std::vector<FrameSequence>& pool, BatchSpec spec,
                           std::uint64_t seed)
    : pool_(&pool), spec_(spec), seed_(seed) {
  spec_.validate();
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (pool[i].size() >= kMinSequenceFrames) groups[pool[i].subject].push_back(i);
  by_subject_.assign(groups.begin(), groups.end());
  if (by_subject_.size() < spec_.p)
    throw ConfigError("training data has " + std::to_string(by_subject_.size()) +
                      " subjects with usable sequences; batch needs p = " +
                      std::to_string(spec_.p));
}

Batch BatchSampler::batch(std::uint64_t step) const {
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32)};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> order(by_subject_.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(spec_.p);
  std::sort(order.begin(), order.end());
  Batch b;
  for (std::size_t s : order) {
    const auto& [subject, seqs] = by_subject_[s];
    std::uniform_int_distribution<std::size_t> pick(0, seqs.size() - 1);
    for (std::size_t j = 0; j < spec_.k; ++j) {
      const std::size_t q = seqs[pick(rng)];
      b.sequences.push_back(q);
      b.frames.push_back(segment_indices((*pool_)[q].size(), spec_.segment_len, rng));
      b.labels.push_back(subject);
    }
  }
  return b;
}

}  // namespace scn
