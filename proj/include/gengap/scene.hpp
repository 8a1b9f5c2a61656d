#ifndef GENGAP_SCENE_HPP
#define GENGAP_SCENE_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "gengap/brir.hpp"
#include "gengap/common.hpp"
#include "gengap/registry.hpp"

namespace gengap {

// Parametrization of the mixture-generating random process: one set of
// databases per acoustic dimension plus the split side items are drawn from.
struct Condition {
  std::vector<DatabaseId> speech_dbs;
  std::vector<DatabaseId> noise_dbs;
  std::vector<DatabaseId> room_dbs;
  Side split_side = Side::train;

  void validate() const;
};

struct NoiseSourceSpec {
  DatabaseId db;
  std::string item_id;
  double offset_s = 0.0;  // absolute position within the recording
  std::string brir_item;
  double azimuth_deg = 0.0;
};

// Everything needed to re-render one scene exactly.
struct SceneSpec {
  uint64_t seed = 0;
  Side side = Side::train;
  DatabaseId speech_db;
  std::string speech_item;
  DatabaseId room_db;
  std::string room_label;
  std::string target_brir;
  double target_azimuth_deg = 0.0;
  std::vector<NoiseSourceSpec> noises;  // 1..3 sources, same room as the target
  double snr_db = 0.0;
  double level_dbfs = -20.0;
};

// Time span of noise audio consumed by a rendered scene, for the
// train/test disjointness audit.
struct NoiseSpan {
  DatabaseId db;
  std::string item_id;
  double begin_s = 0.0;
  double end_s = 0.0;
};

struct Mixture {
  Stereo mixture;
  Stereo speech_direct;  // the clean reference
  Stereo background;     // noises (full BRIR) + reverberant speech, SNR-scaled
  SceneSpec spec;
  std::vector<NoiseSpan> noise_spans;

  std::size_t n_samples() const { return mixture.size(); }
  double duration_s() const { return static_cast<double>(mixture.size()) / kSampleRate; }
};

struct Dataset {
  std::vector<Mixture> mixtures;
  double total_s = 0.0;

  double total_hours() const { return total_s / 3600.0; }
};

// Read-through caches for source material; rendering reloads the same BRIRs
// and noise recordings constantly. Not thread-safe: use one context per
// worker.
class RenderContext {
 public:
  explicit RenderContext(const Registry& registry) : registry_(registry) {}

  const Registry& registry() const { return registry_; }
  const Signal& mono(const std::filesystem::path& path);
  const DirectReverbPair& split_brir_cached(DatabaseId db, const ManifestEntry& entry);
  const Brir& brir(DatabaseId db, const ManifestEntry& entry);

 private:
  const Registry& registry_;
  std::map<std::string, Signal> mono_;
  std::map<std::string, Brir> brirs_;
  std::map<std::string, DirectReverbPair> splits_;
};

// Uniform draws over the condition's databases, items, rooms, split-side
// BRIRs, noise count {1,2,3}, SNR in [-5, 10] dB and level in [-30, -10]
// dBFS. Deterministic in the seed. Throws if a chosen database has no items
// on the requested side.
SceneSpec draw_scene(const Condition& condition, const Registry& registry, uint64_t seed);

// 10 log10(E_direct / E_background), energies over both channels. Zero
// background gives +inf, zero speech -inf.
double compute_snr(const Stereo& speech_direct, const Stereo& background);

// Renders one scene. The target is convolved with the direct and reverberant
// BRIR parts separately; noises use their full BRIRs. The background is
// scaled so compute_snr matches spec.snr_db exactly, then the whole scene is
// scaled to spec.level_dbfs RMS. Scene length equals the utterance length.
Mixture render_scene(const SceneSpec& spec, RenderContext& ctx, bool allow_loop = true);

// Appends scenes until the cumulative duration reaches hours. Scene i uses a
// seed derived from (master_seed, i), so the result does not depend on
// render order; jobs > 1 renders scenes in parallel.
Dataset generate_dataset(const Condition& condition, const Registry& registry, double hours,
                         uint64_t master_seed, int jobs = 1);

// Directory layout: mixture_%06d.wav, speech_%06d.wav, background_%06d.wav
// plus index.csv holding every SceneSpec field.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace gengap

#endif  // GENGAP_SCENE_HPP
