#include "gengap/registry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gengap/fft.hpp"
#include "gengap/rng.hpp"
#include "gengap/wav.hpp"

namespace gengap {

std::string to_string(Kind kind) {
  switch (kind) {
    case Kind::speech: return "speech";
    case Kind::noise: return "noise";
    case Kind::room: return "room";
  }
  return "?";
}

std::string to_string(Side side) { return side == Side::train ? "train" : "test"; }

Kind kind_from_string(const std::string& s) {
  if (s == "speech") return Kind::speech;
  if (s == "noise") return Kind::noise;
  if (s == "room") return Kind::room;
  throw std::invalid_argument("unknown kind: " + s);
}

Side side_from_string(const std::string& s) {
  if (s == "train") return Side::train;
  if (s == "test") return Side::test;
  throw std::invalid_argument("unknown side: " + s);
}

void Manifest::sort_entries() {
  std::sort(entries.begin(), entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.item_id < b.item_id; });
}

const ManifestEntry& Manifest::find(const std::string& item_id) const {
  for (const auto& e : entries)
    if (e.item_id == item_id) return e;
  throw std::runtime_error("item not in " + database.name() + ": " + item_id);
}

bool Manifest::is_split() const {
  for (const auto& e : entries)
    if (e.split == ManifestEntry::Split::unassigned &&
        (database.kind != Kind::noise || e.boundary_s <= 0.0))
      return false;
  return !entries.empty();
}

std::vector<const ManifestEntry*> Manifest::items(Side side) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (database.kind == Kind::noise) {
      out.push_back(&e);
    } else if ((side == Side::train) == (e.split == ManifestEntry::Split::train)) {
      if (e.split != ManifestEntry::Split::unassigned) out.push_back(&e);
    }
  }
  return out;
}

std::pair<double, double> Manifest::noise_interval(const ManifestEntry& e, Side side) const {
  if (database.kind != Kind::noise)
    throw std::logic_error("noise_interval on non-noise database");
  if (e.boundary_s <= 0.0) throw std::runtime_error("noise manifest not split: " + e.item_id);
  return side == Side::train ? std::make_pair(0.0, e.boundary_s)
                             : std::make_pair(e.boundary_s, e.duration_s);
}

std::map<std::string, std::vector<const ManifestEntry*>> Manifest::rooms(Side side) const {
  std::map<std::string, std::vector<const ManifestEntry*>> out;
  for (const ManifestEntry* e : items(side)) out[e->room_label].push_back(e);
  for (auto& [label, list] : out)
    std::sort(list.begin(), list.end(), [](const ManifestEntry* a, const ManifestEntry* b) {
      return a->azimuth_deg != b->azimuth_deg ? a->azimuth_deg < b->azimuth_deg
                                              : a->item_id < b->item_id;
    });
  return out;
}

Manifest split_speech(Manifest manifest) {
  if (manifest.database.kind != Kind::speech)
    throw std::invalid_argument("split_speech: wrong kind");
  if (manifest.entries.empty()) throw std::runtime_error("empty database");
  manifest.sort_entries();
  // ceil(0.8 n) in integer arithmetic.
  const std::size_t n = manifest.entries.size();
  const std::size_t n_train = (8 * n + 9) / 10;
  for (std::size_t i = 0; i < n; ++i)
    manifest.entries[i].split =
        i < n_train ? ManifestEntry::Split::train : ManifestEntry::Split::test;
  return manifest;
}

Manifest split_noise(Manifest manifest, double min_side_s) {
  if (manifest.database.kind != Kind::noise)
    throw std::invalid_argument("split_noise: wrong kind");
  manifest.sort_entries();
  for (auto& e : manifest.entries) {
    const double boundary = 0.8 * e.duration_s;
    const double test_side = e.duration_s - boundary;
    if (boundary < min_side_s - 1e-9 || test_side < min_side_s - 1e-9)
      throw std::runtime_error("noise recording too short to split (" +
                               std::to_string(e.duration_s) + " s): " + e.item_id);
    e.boundary_s = boundary;
    e.split = ManifestEntry::Split::train;  // tag unused for noise, kept non-empty
  }
  return manifest;
}

Manifest split_brir(Manifest manifest) {
  if (manifest.database.kind != Kind::room)
    throw std::invalid_argument("split_brir: wrong kind");
  manifest.sort_entries();
  std::map<std::string, std::vector<ManifestEntry*>> by_room;
  for (auto& e : manifest.entries) by_room[e.room_label].push_back(&e);
  for (auto& [label, list] : by_room) {
    std::sort(list.begin(), list.end(), [](const ManifestEntry* a, const ManifestEntry* b) {
      return a->azimuth_deg != b->azimuth_deg ? a->azimuth_deg < b->azimuth_deg
                                              : a->item_id < b->item_id;
    });
    if (list.size() == 1) {
      list[0]->split = ManifestEntry::Split::train;
      manifest.warnings.push_back("room '" + label + "' has a single BRIR; no test BRIR");
      continue;
    }
    for (std::size_t i = 0; i < list.size(); ++i)
      list[i]->split = i % 2 == 0 ? ManifestEntry::Split::train : ManifestEntry::Split::test;
  }
  return manifest;
}

Manifest split_manifest(Manifest manifest) {
  switch (manifest.database.kind) {
    case Kind::speech: return split_speech(std::move(manifest));
    case Kind::noise: return split_noise(std::move(manifest));
    case Kind::room: return split_brir(std::move(manifest));
  }
  throw std::logic_error("unreachable");
}

SynthProfile SynthProfile::for_database(DatabaseId id) {
  SynthProfile p;
  const int j = (id.index - 1) % kDefaultDatabaseCount;  // 0..4
  switch (id.kind) {
    case Kind::speech: {
      constexpr double f0[] = {110.0, 200.0, 140.0, 260.0, 170.0};
      constexpr double f1[] = {500.0, 700.0, 400.0, 900.0, 600.0};
      constexpr double f2[] = {1500.0, 2100.0, 1100.0, 2700.0, 1900.0};
      constexpr double tilt[] = {-4.0, -7.0, -2.0, -9.0, -5.0};
      constexpr double mod[] = {3.5, 5.0, 2.5, 6.0, 4.2};
      constexpr double pause[] = {0.20, 0.30, 0.15, 0.35, 0.25};
      p.speech.f0_hz = f0[j];
      p.speech.formant1_hz = f1[j];
      p.speech.formant2_hz = f2[j];
      p.speech.tilt_db_per_oct = tilt[j];
      p.speech.mod_rate_hz = mod[j];
      p.speech.pause_fraction = pause[j];
      break;
    }
    case Kind::noise: {
      constexpr double tilt[] = {-6.0, 0.0, -3.0, 3.0, -4.5};
      constexpr double bump_hz[] = {0.0, 0.0, 0.0, 0.0, 1200.0};
      constexpr double bump_db[] = {0.0, 0.0, 0.0, 0.0, 9.0};
      constexpr double mod_rate[] = {0.0, 0.0, 4.0, 1.0, 8.0};
      constexpr double mod_depth[] = {0.0, 0.0, 0.9, 0.3, 0.5};
      p.noise.tilt_db_per_oct = tilt[j];
      p.noise.bump_hz = bump_hz[j];
      p.noise.bump_gain_db = bump_db[j];
      p.noise.mod_rate_hz = mod_rate[j];
      p.noise.mod_depth = mod_depth[j];
      break;
    }
    case Kind::room: {
      constexpr double rt60[] = {0.25, 0.45, 0.70, 1.00, 0.35};
      constexpr double drr[] = {4.0, 2.0, 0.0, -2.0, 3.0};
      constexpr double lp[] = {0.2, 0.35, 0.5, 0.6, 0.1};
      constexpr double delay[] = {3.0, 5.0, 7.0, 6.0, 4.0};
      p.room.base.rt60_s = rt60[j];
      p.room.base.direct_to_reverb_db = drr[j];
      p.room.base.tail_lowpass = lp[j];
      p.room.base.direct_delay_ms = delay[j];
      break;
    }
  }
  return p;
}

namespace {

// Raised-cosine on/off gate with syllabic modulation. Always starts in an
// "on" segment so an utterance is never silent.
Signal speech_envelope(Rng& rng, std::size_t n, const SynthProfile::Speech& p) {
  const double fs = kSampleRate;
  Signal gate(n, 0.0);
  const double pf = std::clamp(p.pause_fraction, 0.0, 0.8);
  std::size_t pos = 0;
  bool on = true;
  while (pos < n) {
    double seg_s = on ? rng.uniform(0.3, 0.7)
                      : rng.uniform(0.5, 1.5) * 0.5 * pf / std::max(1e-6, 1.0 - pf);
    auto seg = static_cast<std::size_t>(seg_s * fs);
    seg = std::max<std::size_t>(seg, 1);
    for (std::size_t i = pos; i < std::min(n, pos + seg); ++i) gate[i] = on ? 1.0 : 0.0;
    pos += seg;
    on = !on;
  }
  // 20 ms edge smoothing.
  const auto edge = static_cast<std::size_t>(0.02 * fs);
  Signal smooth = gate;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0 && gate[i] != gate[i - 1]) {
      for (std::size_t k = 0; k < edge && i + k < n; ++k) {
        const double w = 0.5 * (1.0 - std::cos(M_PI * (k + 1) / static_cast<double>(edge)));
        smooth[i + k] = gate[i - 1] + (gate[i] - gate[i - 1]) * w;
      }
    }
  }
  const double phase = rng.uniform(0.0, 2.0 * M_PI);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    const double syll =
        0.15 + 0.85 * 0.5 * (1.0 + std::sin(2.0 * M_PI * p.mod_rate_hz * t + phase));
    smooth[i] *= syll;
  }
  return smooth;
}

Signal synth_utterance(uint64_t item_seed, const SynthProfile::Speech& p) {
  Rng rng(item_seed);
  const double fs = kSampleRate;
  const double dur = rng.uniform(p.min_dur_s, p.max_dur_s);
  const auto n = static_cast<std::size_t>(dur * fs);

  const double f0 = p.f0_hz * (1.0 + p.f0_spread * rng.uniform(-1.0, 1.0));
  const double vib_rate = rng.uniform(0.8, 2.5);
  const double vib_phase = rng.uniform(0.0, 2.0 * M_PI);
  const double drift = rng.uniform(-0.1, 0.1);  // slow per-utterance pitch glide
  // Formants wander per utterance around the database's register.
  const double formant1 = p.formant1_hz * (1.0 + 0.1 * rng.uniform(-1.0, 1.0));
  const double formant2 = p.formant2_hz * (1.0 + 0.1 * rng.uniform(-1.0, 1.0));

  const int n_harm = static_cast<int>(6000.0 / f0);
  std::vector<double> amp(n_harm + 1, 0.0), phase(n_harm + 1, 0.0);
  for (int k = 1; k <= n_harm; ++k) {
    const double f = k * f0;
    double gain_db = p.tilt_db_per_oct * std::log2(f / f0);
    for (double formant : {formant1, formant2}) {
      const double bw = 0.25 * formant;
      gain_db += 10.0 * std::exp(-0.5 * std::pow((f - formant) / bw, 2.0));
    }
    amp[k] = std::pow(10.0, gain_db / 20.0);
    phase[k] = rng.uniform(0.0, 2.0 * M_PI);
  }

  Signal s(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    const double f0_t = f0 * (1.0 + drift * t / dur +
                              0.05 * std::sin(2.0 * M_PI * vib_rate * t + vib_phase));
    for (int k = 1; k <= n_harm; ++k) phase[k] += 2.0 * M_PI * k * f0_t / fs;
    double x = 0.0;
    for (int k = 1; k <= n_harm; ++k) x += amp[k] * std::sin(phase[k]);
    s[i] = x;
  }

  Signal env = speech_envelope(rng, n, p);
  for (std::size_t i = 0; i < n; ++i) s[i] *= env[i];

  // Consonant-like noise bursts where the envelope rises: short
  // first-difference (high-tilted) transients that break up the purely
  // harmonic structure.
  const double voiced_rms = std::sqrt(energy(s) / static_cast<double>(n));
  for (std::size_t i = 1; i < n; ++i) {
    if (!(env[i - 1] < 0.05 && env[i] >= 0.05)) continue;
    const auto burst = static_cast<std::size_t>(rng.uniform(0.03, 0.08) * fs);
    const double gain = voiced_rms * std::pow(10.0, rng.uniform(-14.0, -8.0) / 20.0);
    double prev = 0.0;
    for (std::size_t k = 0; k < burst && i + k < n; ++k) {
      const double white = rng.normal();
      const double fade = 1.0 - static_cast<double>(k) / static_cast<double>(burst);
      s[i + k] += gain * (white - prev) * fade;
      prev = white;
    }
  }

  const double rms = std::sqrt(energy(s) / static_cast<double>(n));
  if (rms > 0.0) scale_in_place(s, 0.05 / rms);
  return s;
}

Signal synth_noise_recording(uint64_t item_seed, const SynthProfile::Noise& p) {
  Rng rng(item_seed);
  const double fs = kSampleRate;
  const auto n = static_cast<std::size_t>(p.duration_s * fs);
  const std::size_t m = next_pow2(n);

  // Recordings within a database share the tilt register but not the exact
  // slope.
  const double tilt = p.tilt_db_per_oct + rng.uniform(-1.0, 1.0);

  std::vector<std::complex<double>> spec(m);
  for (auto& x : spec) x = rng.normal();
  fft(spec);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t kf = std::min(k, m - k);
    const double f = std::max(20.0, static_cast<double>(kf) * fs / static_cast<double>(m));
    double gain = std::pow(f / 1000.0, tilt / 6.0206);
    if (p.bump_hz > 0.0) {
      const double d = std::log2(f / p.bump_hz);
      gain *= std::pow(10.0, p.bump_gain_db / 20.0 * std::exp(-0.5 * d * d / 0.25));
    }
    spec[k] *= gain;
  }
  fft(spec, true);

  Signal s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = spec[i].real();

  if (p.mod_rate_hz > 0.0) {
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / fs;
      const double m_t =
          (1.0 - p.mod_depth) +
          p.mod_depth * 0.5 * (1.0 + std::sin(2.0 * M_PI * p.mod_rate_hz * t + phase));
      s[i] *= m_t;
    }
  }

  const double rms = std::sqrt(energy(s) / static_cast<double>(n));
  if (rms > 0.0) scale_in_place(s, 0.05 / rms);
  return s;
}

std::string format_azimuth(double az) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+06.1f", az);
  return buf;
}

}  // namespace

Manifest synth_database(DatabaseId database, uint64_t seed, int n_items,
                        const SynthProfile& profile, const std::filesystem::path& out_dir) {
  if (n_items < 1) throw std::invalid_argument("synth_database: n_items must be >= 1");
  std::filesystem::create_directories(out_dir);

  Manifest manifest;
  manifest.database = database;

  switch (database.kind) {
    case Kind::speech: {
      for (int i = 0; i < n_items; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "utt_%05d", i);
        Signal s = synth_utterance(derive_seed(seed, std::string("item"), uint64_t(i)),
                                   profile.speech);
        const auto path = out_dir / (std::string(name) + ".wav");
        write_wav_mono(path, s);
        manifest.entries.push_back({name, path, static_cast<double>(s.size()) / kSampleRate,
                                    "", 0.0, ManifestEntry::Split::unassigned, 0.0});
      }
      break;
    }
    case Kind::noise: {
      for (int i = 0; i < n_items; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "noise_%03d", i);
        Signal s = synth_noise_recording(derive_seed(seed, std::string("item"), uint64_t(i)),
                                         profile.noise);
        const auto path = out_dir / (std::string(name) + ".wav");
        write_wav_mono(path, s);
        manifest.entries.push_back({name, path, static_cast<double>(s.size()) / kSampleRate,
                                    "", 0.0, ManifestEntry::Split::unassigned, 0.0});
      }
      break;
    }
    case Kind::room: {
      const int n_rooms = std::max(1, profile.room.n_rooms);
      int produced = 0;
      for (int r = 0; r < n_rooms && produced < n_items; ++r) {
        int count = n_items / n_rooms + (r < n_items % n_rooms ? 1 : 0);
        count = std::min(count, n_items - produced);
        RoomProfile rp = profile.room.base;
        if (n_rooms > 1)
          rp.rt60_s *= 1.0 + profile.room.rt60_spread *
                                 (static_cast<double>(r) / (n_rooms - 1) - 0.5);
        const std::string label = "room" + std::to_string(r + 1);
        for (int a = 0; a < count; ++a) {
          const double az = count > 1 ? -90.0 + 180.0 * a / (count - 1) : 0.0;
          Brir brir = synth_brir(derive_seed(seed, std::string("room"), uint64_t(r), uint64_t(a)),
                                 rp, az);
          const std::string item = label + "_az" + format_azimuth(az);
          const auto path = out_dir / (item + ".wav");
          write_wav_stereo(path, Stereo{brir.left, brir.right});
          manifest.entries.push_back({item, path,
                                      static_cast<double>(brir.size()) / kSampleRate, label, az,
                                      ManifestEntry::Split::unassigned, 0.0});
          ++produced;
        }
      }
      break;
    }
  }
  manifest.sort_entries();
  return manifest;
}

void write_manifest_csv(const Manifest& manifest, const std::filesystem::path& csv_path) {
  std::ofstream out(csv_path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create " + csv_path.string());
  const auto base = csv_path.parent_path();
  out << "item_id,path,duration,room_label,azimuth_deg,split,boundary_s\n";
  char buf[512];
  for (const auto& e : manifest.entries) {
    std::error_code ec;
    auto rel = std::filesystem::relative(e.path, base, ec);
    const std::string path_str = ec || rel.empty() ? e.path.string() : rel.string();
    std::string split_str;
    if (e.split == ManifestEntry::Split::train) split_str = "train";
    if (e.split == ManifestEntry::Split::test) split_str = "test";
    if (manifest.database.kind == Kind::room) {
      std::snprintf(buf, sizeof(buf), "%s,%s,%.17g,%s,%.17g,%s,\n", e.item_id.c_str(),
                    path_str.c_str(), e.duration_s, e.room_label.c_str(), e.azimuth_deg,
                    split_str.c_str());
    } else if (manifest.database.kind == Kind::noise && e.boundary_s > 0.0) {
      std::snprintf(buf, sizeof(buf), "%s,%s,%.17g,,,%s,%.17g\n", e.item_id.c_str(),
                    path_str.c_str(), e.duration_s, split_str.c_str(), e.boundary_s);
    } else {
      std::snprintf(buf, sizeof(buf), "%s,%s,%.17g,,,%s,\n", e.item_id.c_str(), path_str.c_str(),
                    e.duration_s, split_str.c_str());
    }
    out << buf;
  }
}

Manifest read_manifest_csv(const std::filesystem::path& csv_path, DatabaseId database) {
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("cannot open " + csv_path.string());
  const auto base = csv_path.parent_path();

  Manifest manifest;
  manifest.database = database;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    fields.resize(7);
    ManifestEntry e;
    e.item_id = fields[0];
    std::filesystem::path p(fields[1]);
    e.path = p.is_absolute() ? p : base / p;
    e.duration_s = std::stod(fields[2]);
    e.room_label = fields[3];
    e.azimuth_deg = fields[4].empty() ? 0.0 : std::stod(fields[4]);
    if (fields[5] == "train") e.split = ManifestEntry::Split::train;
    if (fields[5] == "test") e.split = ManifestEntry::Split::test;
    e.boundary_s = fields[6].empty() ? 0.0 : std::stod(fields[6]);
    manifest.entries.push_back(std::move(e));
  }
  manifest.sort_entries();
  return manifest;
}

Manifest import_directory(DatabaseId database, const std::filesystem::path& root) {
  Manifest manifest;
  manifest.database = database;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".wav") continue;
    WavInfo info = probe_wav(entry.path());
    if (info.sample_rate != kSampleRate)
      throw std::runtime_error("expected 16 kHz: " + entry.path().string());
    ManifestEntry e;
    e.item_id = std::filesystem::relative(entry.path(), root).generic_string();
    e.path = entry.path();
    e.duration_s = static_cast<double>(info.frames) / kSampleRate;
    if (database.kind == Kind::room) {
      const std::string stem = entry.path().stem().string();
      const auto pos = stem.rfind("_az");
      if (pos == std::string::npos)
        throw std::runtime_error("room file not named <room>_az<deg>.wav: " +
                                 entry.path().string());
      e.room_label = stem.substr(0, pos);
      e.azimuth_deg = std::stod(stem.substr(pos + 3));
    }
    manifest.entries.push_back(std::move(e));
  }
  if (manifest.entries.empty())
    throw std::runtime_error("no .wav files under " + root.string());
  manifest.sort_entries();
  return manifest;
}

void Registry::add(Manifest manifest) {
  manifests_[manifest.database] = std::move(manifest);
}

const Manifest& Registry::get(DatabaseId id) const {
  auto it = manifests_.find(id);
  if (it == manifests_.end()) {
    std::string known;
    for (const auto& [k, v] : manifests_) known += " " + k.name();
    throw std::runtime_error("unknown database " + id.name() + "; known:" + known);
  }
  return it->second;
}

bool Registry::has(DatabaseId id) const { return manifests_.count(id) > 0; }

std::vector<DatabaseId> Registry::ids() const {
  std::vector<DatabaseId> out;
  for (const auto& [k, v] : manifests_) out.push_back(k);
  return out;
}

Brir Registry::load_brir(DatabaseId id, const ManifestEntry& entry) const {
  if (id.kind != Kind::room) throw std::logic_error("load_brir on non-room database");
  Stereo s = read_wav_stereo(entry.path);
  Brir brir;
  brir.left = std::move(s.left);
  brir.right = std::move(s.right);
  brir.room_label = entry.room_label;
  brir.azimuth_deg = entry.azimuth_deg;
  return brir;
}

Registry Registry::load(const std::filesystem::path& root) {
  Registry reg;
  for (Kind kind : {Kind::speech, Kind::noise, Kind::room}) {
    for (int index = 1;; ++index) {
      const auto dir = root / (to_string(kind) + "_" + std::to_string(index));
      const auto csv = dir / "manifest.csv";
      if (!std::filesystem::exists(csv)) break;
      Manifest m = read_manifest_csv(csv, DatabaseId{kind, index});
      if (!m.is_split()) m = split_manifest(std::move(m));
      reg.add(std::move(m));
    }
  }
  if (reg.ids().empty())
    throw std::runtime_error("no databases under " + root.string());
  return reg;
}

}  // namespace gengap
