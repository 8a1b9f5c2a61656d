#include "gengap/scene.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "gengap/fft.hpp"
#include "gengap/rng.hpp"
#include "gengap/wav.hpp"

namespace gengap {

void Condition::validate() const {
  if (speech_dbs.empty() || noise_dbs.empty() || room_dbs.empty())
    throw std::invalid_argument("condition: every dimension needs at least one database");
  for (const auto& id : speech_dbs)
    if (id.kind != Kind::speech) throw std::invalid_argument("condition: non-speech db in speech slot");
  for (const auto& id : noise_dbs)
    if (id.kind != Kind::noise) throw std::invalid_argument("condition: non-noise db in noise slot");
  for (const auto& id : room_dbs)
    if (id.kind != Kind::room) throw std::invalid_argument("condition: non-room db in room slot");
}

const Signal& RenderContext::mono(const std::filesystem::path& path) {
  auto [it, inserted] = mono_.try_emplace(path.string());
  if (inserted) it->second = read_wav_mono(path);
  return it->second;
}

const Brir& RenderContext::brir(DatabaseId db, const ManifestEntry& entry) {
  auto [it, inserted] = brirs_.try_emplace(entry.path.string());
  if (inserted) it->second = registry_.load_brir(db, entry);
  return it->second;
}

const DirectReverbPair& RenderContext::split_brir_cached(DatabaseId db,
                                                         const ManifestEntry& entry) {
  auto [it, inserted] = splits_.try_emplace(entry.path.string());
  if (inserted) it->second = split_direct_reverb(brir(db, entry));
  return it->second;
}

namespace {

const ManifestEntry* pick_item(const Manifest& manifest, Side side, Rng& rng) {
  auto items = manifest.items(side);
  if (items.empty())
    throw std::runtime_error("database " + manifest.database.name() + " has no items on the " +
                             to_string(side) + " side");
  return items[rng.below(items.size())];
}

}  // namespace

SceneSpec draw_scene(const Condition& condition, const Registry& registry, uint64_t seed) {
  condition.validate();
  Rng rng(seed);
  SceneSpec spec;
  spec.seed = seed;
  spec.side = condition.split_side;

  spec.speech_db = condition.speech_dbs[rng.below(condition.speech_dbs.size())];
  spec.speech_item = pick_item(registry.get(spec.speech_db), spec.side, rng)->item_id;

  spec.room_db = condition.room_dbs[rng.below(condition.room_dbs.size())];
  const Manifest& room_manifest = registry.get(spec.room_db);
  auto rooms = room_manifest.rooms(spec.side);
  if (rooms.empty())
    throw std::runtime_error("database " + spec.room_db.name() + " has no BRIRs on the " +
                             to_string(spec.side) + " side");
  auto room_it = rooms.begin();
  std::advance(room_it, static_cast<long>(rng.below(rooms.size())));
  spec.room_label = room_it->first;
  const auto& room_brirs = room_it->second;

  const ManifestEntry* target = room_brirs[rng.below(room_brirs.size())];
  spec.target_brir = target->item_id;
  spec.target_azimuth_deg = target->azimuth_deg;

  const auto n_noises = 1 + rng.below(3);
  for (uint64_t i = 0; i < n_noises; ++i) {
    NoiseSourceSpec ns;
    ns.db = condition.noise_dbs[rng.below(condition.noise_dbs.size())];
    const Manifest& noise_manifest = registry.get(ns.db);
    const ManifestEntry* item = pick_item(noise_manifest, spec.side, rng);
    ns.item_id = item->item_id;
    const auto [lo, hi] = noise_manifest.noise_interval(*item, spec.side);
    ns.offset_s = rng.uniform(lo, hi);
    const ManifestEntry* brir = room_brirs[rng.below(room_brirs.size())];
    ns.brir_item = brir->item_id;
    ns.azimuth_deg = brir->azimuth_deg;
    spec.noises.push_back(std::move(ns));
  }

  spec.snr_db = rng.uniform(-5.0, 10.0);
  spec.level_dbfs = rng.uniform(-30.0, -10.0);
  return spec;
}

double compute_snr(const Stereo& speech_direct, const Stereo& background) {
  if (speech_direct.size() != background.size())
    throw std::invalid_argument("compute_snr: length mismatch");
  const double e_direct = energy(speech_direct);
  const double e_background = energy(background);
  if (e_background == 0.0) return std::numeric_limits<double>::infinity();
  if (e_direct == 0.0) return -std::numeric_limits<double>::infinity();
  return linear_power_to_db(e_direct / e_background);
}

namespace {

// Cuts n samples from [lo, hi) starting at offset, wrapping back to lo when
// the end of the side interval is reached.
Signal cut_noise_segment(const Signal& recording, std::size_t lo, std::size_t hi,
                         std::size_t start, std::size_t n, bool allow_loop,
                         const std::string& item_id) {
  const std::size_t span = hi - lo;
  if (span == 0) throw std::runtime_error("empty noise interval: " + item_id);
  if (!allow_loop && start + n > hi)
    throw std::runtime_error("noise interval of " + item_id +
                             " shorter than the utterance and looping is disabled");
  Signal out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = recording[lo + (start - lo + i) % span];
  return out;
}

}  // namespace

Mixture render_scene(const SceneSpec& spec, RenderContext& ctx, bool allow_loop) {
  const Registry& reg = ctx.registry();
  const Manifest& speech_manifest = reg.get(spec.speech_db);
  const Manifest& room_manifest = reg.get(spec.room_db);

  const Signal& utterance = ctx.mono(speech_manifest.find(spec.speech_item).path);
  const std::size_t n = utterance.size();
  if (n == 0) throw std::runtime_error("empty utterance: " + spec.speech_item);

  const ManifestEntry& target_entry = room_manifest.find(spec.target_brir);
  const DirectReverbPair& pair = ctx.split_brir_cached(spec.room_db, target_entry);

  Mixture mix;
  mix.spec = spec;
  // One forward transform of the utterance serves both the direct and the
  // reverberant convolution; each stereo BRIR pair is packed into a single
  // complex kernel spectrum.
  {
    const std::size_t fft_size = next_pow2(n + pair.direct.size() - 1);
    const auto utt_fft = forward_fft_padded(utterance, fft_size);
    mix.speech_direct = convolve_with_packed(
        utt_fft, packed_pair_spectrum(pair.direct.left, pair.direct.right, fft_size), n);
    mix.background = convolve_with_packed(
        utt_fft, packed_pair_spectrum(pair.reverberant.left, pair.reverberant.right, fft_size),
        n);
  }
  Stereo background = std::move(mix.background);

  for (const auto& ns : spec.noises) {
    const Manifest& noise_manifest = reg.get(ns.db);
    const ManifestEntry& entry = noise_manifest.find(ns.item_id);
    const auto [lo_s, hi_s] = noise_manifest.noise_interval(entry, spec.side);
    const Signal& recording = ctx.mono(entry.path);
    const auto lo = static_cast<std::size_t>(std::llround(lo_s * kSampleRate));
    const auto hi = std::min(recording.size(),
                             static_cast<std::size_t>(std::llround(hi_s * kSampleRate)));
    auto start = static_cast<std::size_t>(std::llround(ns.offset_s * kSampleRate));
    start = std::clamp(start, lo, hi > lo ? hi - 1 : lo);
    Signal segment = cut_noise_segment(recording, lo, hi, start, n, allow_loop, ns.item_id);

    const ManifestEntry& brir_entry = room_manifest.find(ns.brir_item);
    const Brir& brir = ctx.brir(spec.room_db, brir_entry);
    const std::size_t fft_size = next_pow2(n + brir.size() - 1);
    Stereo conv =
        convolve_with_packed(forward_fft_padded(segment, fft_size),
                             packed_pair_spectrum(brir.left, brir.right, fft_size), n);
    add_in_place(background, conv);

    // Consumed spans, split in two when the cut wrapped around.
    const double fs = kSampleRate;
    const std::size_t span = hi - lo;
    if (n >= span) {
      mix.noise_spans.push_back({ns.db, ns.item_id, lo / fs, hi / fs});
    } else if (start + n <= hi) {
      mix.noise_spans.push_back({ns.db, ns.item_id, start / fs, (start + n) / fs});
    } else {
      mix.noise_spans.push_back({ns.db, ns.item_id, start / fs, hi / fs});
      mix.noise_spans.push_back({ns.db, ns.item_id, lo / fs, (lo + (start + n - hi)) / fs});
    }
  }

  const double e_direct = energy(mix.speech_direct);
  const double e_background = energy(background);
  if (e_direct == 0.0) throw std::runtime_error("silent target in scene: " + spec.speech_item);
  if (e_background == 0.0) throw std::runtime_error("silent background in scene");

  // Background scaled to hit the requested SNR; the reference stays fixed
  // until the common level scaling below.
  const double snr_gain = std::sqrt(e_direct / (e_background * db_to_linear_power(spec.snr_db)));
  scale_in_place(background, snr_gain);

  Stereo mixture = mix.speech_direct;
  add_in_place(mixture, background);
  const double rms = std::sqrt(energy(mixture) / (2.0 * static_cast<double>(n)));
  const double level_gain = rms > 0.0 ? std::pow(10.0, spec.level_dbfs / 20.0) / rms : 1.0;

  scale_in_place(mix.speech_direct, level_gain);
  scale_in_place(background, level_gain);
  mix.background = std::move(background);
  mix.mixture = mix.speech_direct;
  add_in_place(mix.mixture, mix.background);
  return mix;
}

Dataset generate_dataset(const Condition& condition, const Registry& registry, double hours,
                         uint64_t master_seed, int jobs) {
  if (hours <= 0.0) throw std::invalid_argument("generate_dataset: hours must be > 0");
  condition.validate();
  const double target_s = hours * 3600.0;

  // Scene durations are known from the manifests, so the specs can be drawn
  // up front and rendered in parallel afterwards.
  std::vector<SceneSpec> specs;
  double total_s = 0.0;
  for (std::size_t i = 0; total_s < target_s; ++i) {
    SceneSpec spec = draw_scene(condition, registry, derive_seed(master_seed, uint64_t(i)));
    total_s += registry.get(spec.speech_db).find(spec.speech_item).duration_s;
    specs.push_back(std::move(spec));
  }

  Dataset dataset;
  dataset.mixtures.resize(specs.size());
  jobs = std::max(1, jobs);
  if (jobs == 1) {
    RenderContext ctx(registry);
    for (std::size_t i = 0; i < specs.size(); ++i)
      dataset.mixtures[i] = render_scene(specs[i], ctx);
  } else {
    std::vector<std::thread> workers;
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(jobs);
    for (int w = 0; w < jobs; ++w)
      workers.emplace_back([&, w] {
        RenderContext ctx(registry);
        try {
          for (std::size_t i = next.fetch_add(1); i < specs.size(); i = next.fetch_add(1))
            dataset.mixtures[i] = render_scene(specs[i], ctx);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& t : workers) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  for (const auto& m : dataset.mixtures) dataset.total_s += m.duration_s();
  return dataset;
}

namespace {

std::string spec_to_csv(std::size_t index, const Mixture& m) {
  const SceneSpec& s = m.spec;
  char buf[1024];
  std::string row;
  std::snprintf(buf, sizeof(buf), "%06zu,%llu,%.17g,%s,%d,%s,%d,%s,%s,%.17g,%.17g,%.17g,%zu",
                index, static_cast<unsigned long long>(s.seed), m.duration_s(),
                to_string(s.side).c_str(), s.speech_db.index, s.speech_item.c_str(),
                s.room_db.index, s.room_label.c_str(), s.target_brir.c_str(),
                s.target_azimuth_deg, s.snr_db, s.level_dbfs, s.noises.size());
  row += buf;
  for (std::size_t i = 0; i < 3; ++i) {
    if (i < s.noises.size()) {
      const auto& ns = s.noises[i];
      std::snprintf(buf, sizeof(buf), ",%d,%s,%.17g,%s,%.17g", ns.db.index, ns.item_id.c_str(),
                    ns.offset_s, ns.brir_item.c_str(), ns.azimuth_deg);
    } else {
      std::snprintf(buf, sizeof(buf), ",,,,,");
    }
    row += buf;
  }
  return row;
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream index(dir / "index.csv", std::ios::trunc);
  if (!index) throw std::runtime_error("cannot create " + (dir / "index.csv").string());
  index << "index,seed,duration_s,split,speech_db,speech_item,room_db,room_label,target_brir,"
           "target_azimuth_deg,snr_db,level_dbfs,n_noises";
  for (int i = 1; i <= 3; ++i)
    index << ",noise" << i << "_db,noise" << i << "_item,noise" << i << "_offset_s,noise" << i
          << "_brir,noise" << i << "_azimuth_deg";
  index << "\n";

  char name[64];
  for (std::size_t i = 0; i < dataset.mixtures.size(); ++i) {
    const Mixture& m = dataset.mixtures[i];
    std::snprintf(name, sizeof(name), "mixture_%06zu.wav", i);
    write_wav_stereo(dir / name, m.mixture);
    std::snprintf(name, sizeof(name), "speech_%06zu.wav", i);
    write_wav_stereo(dir / name, m.speech_direct);
    std::snprintf(name, sizeof(name), "background_%06zu.wav", i);
    write_wav_stereo(dir / name, m.background);
    index << spec_to_csv(i, m) << "\n";
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream index(dir / "index.csv");
  if (!index) throw std::runtime_error("cannot open " + (dir / "index.csv").string());
  Dataset dataset;
  std::string line;
  std::getline(index, line);  // header
  std::size_t i = 0;
  char name[64];
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    f.resize(28);

    Mixture m;
    m.spec.seed = std::stoull(f[1]);
    m.spec.side = side_from_string(f[3]);
    m.spec.speech_db = {Kind::speech, std::stoi(f[4])};
    m.spec.speech_item = f[5];
    m.spec.room_db = {Kind::room, std::stoi(f[6])};
    m.spec.room_label = f[7];
    m.spec.target_brir = f[8];
    m.spec.target_azimuth_deg = std::stod(f[9]);
    m.spec.snr_db = std::stod(f[10]);
    m.spec.level_dbfs = std::stod(f[11]);
    const auto n_noises = static_cast<std::size_t>(std::stoul(f[12]));
    for (std::size_t k = 0; k < n_noises; ++k) {
      NoiseSourceSpec ns;
      ns.db = {Kind::noise, std::stoi(f[13 + 5 * k])};
      ns.item_id = f[14 + 5 * k];
      ns.offset_s = std::stod(f[15 + 5 * k]);
      ns.brir_item = f[16 + 5 * k];
      ns.azimuth_deg = std::stod(f[17 + 5 * k]);
      m.spec.noises.push_back(std::move(ns));
    }

    std::snprintf(name, sizeof(name), "mixture_%06zu.wav", i);
    m.mixture = read_wav_stereo(dir / name);
    std::snprintf(name, sizeof(name), "speech_%06zu.wav", i);
    m.speech_direct = read_wav_stereo(dir / name);
    std::snprintf(name, sizeof(name), "background_%06zu.wav", i);
    m.background = read_wav_stereo(dir / name);
    dataset.mixtures.push_back(std::move(m));
    dataset.total_s += dataset.mixtures.back().duration_s();
    ++i;
  }
  return dataset;
}

}  // namespace gengap
