#ifndef GENGAP_REGISTRY_HPP
#define GENGAP_REGISTRY_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gengap/brir.hpp"
#include "gengap/common.hpp"

namespace gengap {

enum class Kind { speech, noise, room };
enum class Side { train, test };

std::string to_string(Kind kind);
std::string to_string(Side side);
Kind kind_from_string(const std::string& s);
Side side_from_string(const std::string& s);

struct DatabaseId {
  Kind kind = Kind::speech;
  int index = 1;  // 1..M

  auto operator<=>(const DatabaseId&) const = default;
  std::string name() const { return to_string(kind) + "_" + std::to_string(index); }
};

inline constexpr int kDefaultDatabaseCount = 5;

struct ManifestEntry {
  enum class Split { unassigned, train, test };

  std::string item_id;
  std::filesystem::path path;
  double duration_s = 0.0;
  std::string room_label;   // room kind only
  double azimuth_deg = 0.0;  // room kind only
  Split split = Split::unassigned;
  double boundary_s = 0.0;  // noise kind only: [0, boundary) train, [boundary, end) test
};

// Inventory of one database. Entries are kept in lexicographic item_id order,
// which is what makes the split rules deterministic.
struct Manifest {
  DatabaseId database;
  std::vector<ManifestEntry> entries;
  std::vector<std::string> warnings;

  void sort_entries();
  const ManifestEntry& find(const std::string& item_id) const;
  bool is_split() const;

  // Entries usable on a side. For noise every recording is usable on both
  // sides (time-disjoint segments); for speech and rooms the split tag picks.
  std::vector<const ManifestEntry*> items(Side side) const;

  // Usable time interval of a noise recording on a side.
  std::pair<double, double> noise_interval(const ManifestEntry& e, Side side) const;

  // Split-side BRIRs of one room, ordered by azimuth.
  std::map<std::string, std::vector<const ManifestEntry*>> rooms(Side side) const;
};

// First 80 % of the utterances (lexicographic, count rounded up) go to train.
Manifest split_speech(Manifest manifest);

// Per-recording time boundary at 80 % of the duration. Rejects recordings
// whose shorter side would be under min_side_s.
Manifest split_noise(Manifest manifest, double min_side_s = 1.0);

// Within each room, BRIRs ordered by azimuth alternate train/test starting
// with train. A room with a single BRIR goes to train with a warning.
Manifest split_brir(Manifest manifest);

Manifest split_manifest(Manifest manifest);  // dispatches on kind

// Per-database synthesis parameters. Databases with different indices get
// audibly different material so that cross-database mismatch is nontrivial.
struct SynthProfile {
  struct Speech {
    double f0_hz = 150.0;
    double f0_spread = 0.15;        // per-utterance relative f0 jitter
    double formant1_hz = 600.0;
    double formant2_hz = 1800.0;
    double tilt_db_per_oct = -5.0;  // harmonic rolloff
    double mod_rate_hz = 4.0;       // syllabic amplitude modulation
    double pause_fraction = 0.25;
    double min_dur_s = 1.5;
    double max_dur_s = 3.5;
  } speech;

  struct Noise {
    double duration_s = 30.0;
    double tilt_db_per_oct = -3.0;
    double bump_hz = 0.0;  // optional band emphasis, 0 disables
    double bump_gain_db = 0.0;
    double mod_rate_hz = 0.0;  // 0 = stationary
    double mod_depth = 0.0;
  } noise;

  struct Room {
    RoomProfile base;
    int n_rooms = 2;
    double rt60_spread = 0.3;  // relative rt60 variation across rooms
  } room;

  static SynthProfile for_database(DatabaseId id);
};

// Renders n_items WAV files under out_dir and returns the (unsplit) manifest.
// Deterministic in (database, seed, n_items, profile).
Manifest synth_database(DatabaseId database, uint64_t seed, int n_items,
                        const SynthProfile& profile, const std::filesystem::path& out_dir);

void write_manifest_csv(const Manifest& manifest, const std::filesystem::path& csv_path);
Manifest read_manifest_csv(const std::filesystem::path& csv_path, DatabaseId database);

// Importer stub: maps a directory tree of 16 kHz WAV files to a manifest.
// Room databases expect files named <room>_az<degrees>.wav; no corpus-specific
// parsing beyond that.
Manifest import_directory(DatabaseId database, const std::filesystem::path& root);

// All manifests of one experiment, keyed by database id.
class Registry {
 public:
  void add(Manifest manifest);
  const Manifest& get(DatabaseId id) const;
  bool has(DatabaseId id) const;
  std::vector<DatabaseId> ids() const;

  Brir load_brir(DatabaseId id, const ManifestEntry& entry) const;

  // Reads root/<kind>_<index>/manifest.csv for every database present,
  // applying the split rules to any manifest that is not split yet.
  static Registry load(const std::filesystem::path& root);

 private:
  std::map<DatabaseId, Manifest> manifests_;
};

}  // namespace gengap

#endif  // GENGAP_REGISTRY_HPP
