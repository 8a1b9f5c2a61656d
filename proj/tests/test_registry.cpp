#include <doctest.h>

#include <fstream>
#include <set>

#include "gengap/registry.hpp"
#include "gengap/rng.hpp"
#include "test_support.hpp"

using namespace gengap;

namespace {

Manifest fake_speech(int n) {
  Manifest m;
  m.database = {Kind::speech, 1};
  for (int i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "utt_%05d", i);
    m.entries.push_back({id, "/nowhere/" + std::string(id) + ".wav", 2.0, "", 0.0,
                         ManifestEntry::Split::unassigned, 0.0});
  }
  return m;
}

Manifest fake_noise(std::initializer_list<double> durations) {
  Manifest m;
  m.database = {Kind::noise, 1};
  int i = 0;
  for (double d : durations) {
    char id[16];
    std::snprintf(id, sizeof(id), "noise_%03d", i++);
    m.entries.push_back({id, "/nowhere/n.wav", d, "", 0.0, ManifestEntry::Split::unassigned, 0.0});
  }
  return m;
}

Manifest fake_rooms(std::initializer_list<int> brirs_per_room) {
  Manifest m;
  m.database = {Kind::room, 1};
  int r = 0;
  for (int count : brirs_per_room) {
    const std::string label = "room" + std::to_string(++r);
    for (int a = 0; a < count; ++a) {
      const double az = count > 1 ? -90.0 + 180.0 * a / (count - 1) : 0.0;
      m.entries.push_back({label + "_az" + std::to_string(a), "/nowhere/b.wav", 0.5, label, az,
                           ManifestEntry::Split::unassigned, 0.0});
    }
  }
  return m;
}

std::pair<std::size_t, std::size_t> split_counts(const Manifest& m) {
  std::size_t train = 0, test = 0;
  for (const auto& e : m.entries) {
    if (e.split == ManifestEntry::Split::train) ++train;
    if (e.split == ManifestEntry::Split::test) ++test;
  }
  return {train, test};
}

}  // namespace

TEST_CASE("split_speech takes the first 80 percent, rounded up") {
  auto [train10, test10] = split_counts(split_speech(fake_speech(10)));
  CHECK(train10 == 8);
  CHECK(test10 == 2);

  // TIMIT-sized corpus.
  auto [train63, test63] = split_counts(split_speech(fake_speech(6300)));
  CHECK(train63 == 5040);
  CHECK(test63 == 1260);

  auto [train1, test1] = split_counts(split_speech(fake_speech(1)));
  CHECK(train1 == 1);
  CHECK(test1 == 0);

  CHECK_THROWS_WITH(split_speech(fake_speech(0)), doctest::Contains("empty"));
}

TEST_CASE("split_speech is deterministic, idempotent and ordered") {
  Manifest a = split_speech(fake_speech(17));
  Manifest b = split_speech(split_speech(fake_speech(17)));
  REQUIRE(a.entries.size() == b.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) CHECK(a.entries[i].split == b.entries[i].split);
  // Lexicographic prefix goes to train.
  bool seen_test = false;
  for (const auto& e : a.entries) {
    if (e.split == ManifestEntry::Split::test) seen_test = true;
    if (seen_test) CHECK(e.split == ManifestEntry::Split::test);
  }
}

TEST_CASE("split_speech train fraction bound") {
  for (int n : {1, 2, 3, 7, 10, 33, 100, 999}) {
    auto [train, test] = split_counts(split_speech(fake_speech(n)));
    const double fraction = static_cast<double>(train) / n;
    CHECK(fraction >= 0.8);
    CHECK(fraction <= 0.8 + 1.0 / n);
  }
}

TEST_CASE("split_noise sets the 80 percent boundary") {
  Manifest m = split_noise(fake_noise({100.0, 5.0}));
  CHECK(m.entries[0].boundary_s == doctest::Approx(80.0));
  CHECK(m.entries[1].boundary_s == doctest::Approx(4.0));

  const auto [lo, hi] = m.noise_interval(m.entries[1], Side::test);
  CHECK(lo == doctest::Approx(4.0));
  CHECK(hi == doctest::Approx(5.0));

  CHECK_THROWS_WITH(split_noise(fake_noise({0.5})), doctest::Contains("too short"));
}

TEST_CASE("split_brir alternates within each room ordered by azimuth") {
  Manifest surrey = split_brir(fake_rooms({37}));
  auto [train, test] = split_counts(surrey);
  CHECK(train == 19);
  CHECK(test == 18);

  Manifest two = split_brir(fake_rooms({2}));
  auto [t2, s2] = split_counts(two);
  CHECK(t2 == 1);
  CHECK(s2 == 1);

  Manifest one = split_brir(fake_rooms({1}));
  auto [t1, s1] = split_counts(one);
  CHECK(t1 == 1);
  CHECK(s1 == 0);
  REQUIRE(one.warnings.size() == 1);
  CHECK(one.warnings[0].find("single BRIR") != std::string::npos);

  // Even positions (by azimuth) are train.
  auto rooms = surrey.rooms(Side::train);
  for (const auto& [label, list] : rooms)
    for (std::size_t i = 1; i < list.size(); ++i)
      CHECK(list[i - 1]->azimuth_deg < list[i]->azimuth_deg);
}

TEST_CASE("train and test sides never share items") {
  for (const auto& manifest :
       {split_speech(fake_speech(23)), split_brir(fake_rooms({5, 8, 1}))}) {
    std::set<std::string> train_ids, test_ids;
    for (const auto* e : manifest.items(Side::train)) train_ids.insert(e->item_id);
    for (const auto* e : manifest.items(Side::test)) test_ids.insert(e->item_id);
    for (const auto& id : train_ids) CHECK(test_ids.count(id) == 0);
  }
  // Noise sides are time-disjoint per recording.
  Manifest noise = split_noise(fake_noise({30.0, 12.0}));
  for (const auto& e : noise.entries) {
    const auto train = noise.noise_interval(e, Side::train);
    const auto test = noise.noise_interval(e, Side::test);
    CHECK(train.second <= test.first);
  }

  // And across every synthesized manifest in the fixture registry.
  const auto& reg = test::fixture_registry();
  for (const DatabaseId& id : reg.ids()) {
    const Manifest& m = reg.get(id);
    if (id.kind == Kind::noise) {
      for (const auto& e : m.entries)
        CHECK(m.noise_interval(e, Side::train).second <= m.noise_interval(e, Side::test).first);
      continue;
    }
    std::set<std::string> train_ids;
    for (const auto* e : m.items(Side::train)) train_ids.insert(e->item_id);
    for (const auto* e : m.items(Side::test)) CHECK(train_ids.count(e->item_id) == 0);
  }
}

TEST_CASE("synth_database is deterministic to the byte") {
  const auto dir_a = test::scratch_dir("synth_a");
  const auto dir_b = test::scratch_dir("synth_b");
  const DatabaseId id{Kind::speech, 1};
  const auto profile = SynthProfile::for_database(id);
  Manifest a = synth_database(id, 1, 3, profile, dir_a);
  Manifest b = synth_database(id, 1, 3, profile, dir_b);
  REQUIRE(a.entries.size() == 3);
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    std::ifstream fa(a.entries[i].path, std::ios::binary);
    std::ifstream fb(b.entries[i].path, std::ios::binary);
    const std::string bytes_a((std::istreambuf_iterator<char>(fa)), {});
    const std::string bytes_b((std::istreambuf_iterator<char>(fb)), {});
    CHECK(bytes_a == bytes_b);
    CHECK(!bytes_a.empty());
  }
  // Distinct seeds give distinct audio.
  const auto dir_c = test::scratch_dir("synth_c");
  Manifest c = synth_database(id, 2, 3, profile, dir_c);
  std::ifstream fa(a.entries[0].path, std::ios::binary);
  std::ifstream fc(c.entries[0].path, std::ios::binary);
  const std::string bytes_a((std::istreambuf_iterator<char>(fa)), {});
  const std::string bytes_c((std::istreambuf_iterator<char>(fc)), {});
  CHECK(bytes_a != bytes_c);
}

TEST_CASE("synth_database room layout and noise durations") {
  const auto dir = test::scratch_dir("synth_room");
  SynthProfile profile = SynthProfile::for_database({Kind::room, 2});
  profile.room.n_rooms = 2;
  Manifest rooms = synth_database({Kind::room, 2}, 5, 8, profile, dir);
  std::map<std::string, int> per_room;
  for (const auto& e : rooms.entries) per_room[e.room_label]++;
  REQUIRE(per_room.size() == 2);
  for (const auto& [label, count] : per_room) CHECK(count == 4);

  const auto noise_dir = test::scratch_dir("synth_noise");
  SynthProfile np = SynthProfile::for_database({Kind::noise, 3});
  np.noise.duration_s = 10.0;
  Manifest noise = synth_database({Kind::noise, 3}, 3, 5, np, noise_dir);
  REQUIRE(noise.entries.size() == 5);
  for (const auto& e : noise.entries) CHECK(e.duration_s == doctest::Approx(10.0));
}

TEST_CASE("manifest csv round trips through disk") {
  const auto dir = test::scratch_dir("manifest_csv");
  SynthProfile profile = SynthProfile::for_database({Kind::room, 1});
  Manifest m = split_brir(synth_database({Kind::room, 1}, 3, 6, profile, dir));
  write_manifest_csv(m, dir / "manifest.csv");
  Manifest back = read_manifest_csv(dir / "manifest.csv", m.database);
  REQUIRE(back.entries.size() == m.entries.size());
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    CHECK(back.entries[i].item_id == m.entries[i].item_id);
    CHECK(back.entries[i].duration_s == doctest::Approx(m.entries[i].duration_s));
    CHECK(back.entries[i].room_label == m.entries[i].room_label);
    CHECK(back.entries[i].azimuth_deg == doctest::Approx(m.entries[i].azimuth_deg));
    CHECK(back.entries[i].split == m.entries[i].split);
    CHECK(std::filesystem::exists(back.entries[i].path));
  }
}

TEST_CASE("import_directory maps a tree of wavs") {
  const auto dir = test::scratch_dir("import");
  SynthProfile profile = SynthProfile::for_database({Kind::speech, 1});
  synth_database({Kind::speech, 1}, 4, 3, profile, dir / "corpus");
  Manifest m = import_directory({Kind::speech, 2}, dir / "corpus");
  CHECK(m.entries.size() == 3);
  for (const auto& e : m.entries) CHECK(e.duration_s > 0.0);

  const auto room_dir = test::scratch_dir("import_room");
  synth_database({Kind::room, 1}, 4, 4,
                 SynthProfile::for_database({Kind::room, 1}), room_dir / "brirs");
  Manifest rooms = import_directory({Kind::room, 1}, room_dir / "brirs");
  CHECK(rooms.entries.size() == 4);
  for (const auto& e : rooms.entries) CHECK(!e.room_label.empty());
}

TEST_CASE("registry loads and auto-splits a database tree") {
  const auto& reg = test::fixture_registry();
  CHECK(reg.has({Kind::speech, 1}));
  CHECK(reg.has({Kind::room, 3}));
  CHECK_THROWS_WITH(reg.get({Kind::speech, 9}), doctest::Contains("unknown database"));
  const Manifest& m = reg.get({Kind::speech, 2});
  CHECK(m.is_split());
  CHECK(m.items(Side::train).size() + m.items(Side::test).size() == m.entries.size());
}
