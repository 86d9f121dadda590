#include <gtest/gtest.h>

#include <filesystem>

#include "oracles.hpp"
#include "pfoa/datamodel.hpp"
#include "pfoa/error.hpp"

using namespace pfoa::data;

TEST(PfoaRule, MatchesTruthTableOnAllGradeCombinations) {
  int positives = 0;
  for (int ost = 0; ost <= 3; ++ost) {
    for (int jsn = 0; jsn <= 3; ++jsn) {
      for (int scl = 0; scl <= 3; ++scl) {
        for (int cyst = 0; cyst <= 3; ++cyst) {
          const bool got = pfoa_label({ost, jsn, scl, cyst});
          EXPECT_EQ(got, oracle::pfoa_rule(ost, jsn, scl, cyst)) << ost << jsn << scl << cyst;
          positives += got ? 1 : 0;
        }
      }
    }
  }
  // 128 with osteophyte >= 2, 48 with osteophyte 1 and JSN >= 1, 45 with
  // osteophyte 0, JSN >= 1 and sclerosis or cysts.
  EXPECT_EQ(positives, 221);
}

TEST(PfoaRule, RejectsOutOfRangeGrades) {
  EXPECT_THROW(pfoa_label({4, 0, 0, 0}), pfoa::ValidationError);
  EXPECT_THROW(pfoa_label({0, -1, 0, 0}), pfoa::ValidationError);
}

namespace {

KneeRecord random_record(std::mt19937_64& rng, int i) {
  KneeRecord r;
  r.subject_id = "P" + std::to_string(i);
  r.side = pfoa::uniform01(rng) < 0.5 ? Side::Left : Side::Right;
  r.visit = static_cast<Visit>(pfoa::uniform_index(rng, 5));
  r.age = 40.0 + 40.0 * pfoa::uniform01(rng);
  r.sex = pfoa::uniform01(rng) < 0.5 ? Sex::Female : Sex::Male;
  if (pfoa::uniform01(rng) < 0.8) r.bmi = 18.0 + 20.0 * pfoa::uniform01(rng);
  if (pfoa::uniform01(rng) < 0.8) r.womac_total = 96.0 * pfoa::uniform01(rng);
  if (pfoa::uniform01(rng) < 0.8) r.womac_pain = std::round(20.0 * pfoa::uniform01(rng));
  if (pfoa::uniform01(rng) < 0.9) r.kl_grade = static_cast<int>(pfoa::uniform_index(rng, 6));
  if (pfoa::uniform01(rng) < 0.9) {
    PatellofemoralGrades g;
    g.osteophyte = static_cast<int>(pfoa::uniform_index(rng, 4));
    g.jsn = static_cast<int>(pfoa::uniform_index(rng, 4));
    g.sclerosis = static_cast<int>(pfoa::uniform_index(rng, 4));
    g.cysts = static_cast<int>(pfoa::uniform_index(rng, 4));
    r.pf_grades = g;
    r.pfoa = pfoa_label(g);
  }
  if (pfoa::uniform01(rng) < 0.9) r.image_path = "img/" + r.key().str() + ".png";
  return r;
}

DatasetManifest random_manifest(std::uint64_t seed, int n) {
  auto rng = pfoa::make_stream(seed, 1);
  DatasetManifest m;
  m.provenance = "test cohort";
  m.spacing_mm = 0.15;
  for (int i = 0; i < n; ++i) m.records.push_back(random_record(rng, i));
  return m;
}

std::string header_and(const std::string& row) { return std::string(kManifestHeader) + "\n" + row + "\n"; }

}  // namespace

TEST(Manifest, RoundTripIsExact) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto m = random_manifest(seed, 40);
    EXPECT_EQ(parse_manifest(format_manifest(m)), m);
  }
}

TEST(Manifest, FileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "pfoa_manifest_test";
  std::filesystem::create_directories(dir);
  const auto m = random_manifest(99, 10);
  save_manifest(m, dir / "m.csv");
  EXPECT_EQ(load_manifest(dir / "m.csv"), m);
  std::filesystem::remove_all(dir);
}

TEST(Manifest, MissingFieldsStayMissing) {
  const auto m = parse_manifest(header_and("A,L,baseline,60,F,,,,,,,,,,"));
  ASSERT_EQ(m.records.size(), 1u);
  const auto& r = m.records[0];
  EXPECT_FALSE(r.bmi);
  EXPECT_FALSE(r.womac_total);
  EXPECT_FALSE(r.kl_grade);
  EXPECT_FALSE(r.pfoa);
  EXPECT_FALSE(r.image_path);
}

TEST(Manifest, NonstandardKlIsKeptAsRead) {
  const auto m = parse_manifest(header_and("A,L,baseline,60,F,25,,,9,,,,,1,a.png"));
  ASSERT_TRUE(m.records[0].kl_grade);
  EXPECT_EQ(*m.records[0].kl_grade, 9);
  EXPECT_FALSE(m.records[0].has_standard_kl());
}

TEST(Manifest, ErrorsNameRowAndColumn) {
  try {
    parse_manifest(header_and("A,L,baseline,sixty,F,,,,,,,,,,"));
    FAIL();
  } catch (const pfoa::ParseError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("age"), std::string::npos) << msg;
  }
  try {
    parse_manifest(header_and("A,L,baseline,60,F"));
    FAIL();
  } catch (const pfoa::ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
  }
  EXPECT_THROW(parse_manifest("subject,side\nA,L\n"), pfoa::ParseError);
  EXPECT_THROW(parse_manifest(header_and("A,X,baseline,60,F,,,,,,,,,,")), pfoa::ParseError);
  EXPECT_THROW(parse_manifest(header_and("A,L,baseline,60,F,,,,,5,,,,,")), pfoa::Error);
}

TEST(Manifest, DuplicateKeysAreRejected) {
  const std::string row = "A,L,baseline,60,F,,,,,,,,,,";
  EXPECT_THROW(parse_manifest(std::string(kManifestHeader) + "\n" + row + "\n" + row + "\n"),
               pfoa::ValidationError);
}

TEST(Manifest, DoublesRoundTrip) {
  auto rng = pfoa::make_stream(5, 0);
  for (int i = 0; i < 2000; ++i) {
    const double v = std::ldexp(pfoa::uniform01(rng) - 0.5, static_cast<int>(pfoa::uniform_index(rng, 80)) - 40);
    EXPECT_EQ(parse_double(format_double(v)), v);
  }
}

TEST(Exclusion, PlantedDefectsAreCountedOnceInOrder) {
  auto base = [](const std::string& id) {
    KneeRecord r;
    r.subject_id = id;
    r.age = 60;
    r.kl_grade = 2;
    r.pfoa = true;
    r.image_path = id + ".png";
    return r;
  };
  DatasetManifest m;
  auto ok = base("ok");
  auto no_image = base("no_image");
  no_image.image_path.reset();
  no_image.pfoa.reset();  // also unlabeled; counted as missing radiograph only
  auto no_label = base("no_label");
  no_label.pfoa.reset();
  no_label.kl_grade = 7;  // also non-standard; counted as missing PFOA only
  auto bad_kl = base("bad_kl");
  bad_kl.kl_grade = 5;
  auto gated = base("gated");
  auto kl_missing = base("kl_missing");
  kl_missing.kl_grade.reset();
  auto no_detection = base("no_detection");
  m.records = {ok, no_image, no_label, bad_kl, gated, kl_missing, no_detection};

  std::map<RecordKey, std::optional<pfoa::RoiDetection>> roi;
  const pfoa::RoiDetection det{{0, 0, 10, 20}, 0.95};
  for (const auto& r : m.records) roi[r.key()] = det;
  roi[gated.key()] = std::nullopt;
  roi.erase(no_detection.key());

  const auto result = exclusion_filter(m, roi);
  EXPECT_EQ(result.counts.missing_radiograph, 1u);
  EXPECT_EQ(result.counts.missing_pfoa, 1u);
  EXPECT_EQ(result.counts.nonstandard_kl, 1u);
  EXPECT_EQ(result.counts.roi_gate, 2u);
  ASSERT_EQ(result.kept.records.size(), 2u);
  EXPECT_EQ(result.kept.records[0].subject_id, "ok");
  EXPECT_EQ(result.kept.records[1].subject_id, "kl_missing");
  EXPECT_EQ(result.counts.total() + result.kept.records.size(), m.records.size());
}

TEST(Exclusion, CountsAlwaysAddUp) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto m = random_manifest(seed, 50);
    auto rng = pfoa::make_stream(seed, 2);
    std::map<RecordKey, std::optional<pfoa::RoiDetection>> roi;
    for (const auto& r : m.records) {
      if (pfoa::uniform01(rng) < 0.85) roi[r.key()] = pfoa::RoiDetection{{0, 0, 4, 8}, 0.95};
    }
    const auto res = exclusion_filter(m, roi);
    EXPECT_EQ(res.counts.total() + res.kept.records.size(), m.records.size());
    for (const auto& r : res.kept.records) {
      EXPECT_TRUE(r.image_path && r.pfoa && roi.count(r.key()) && (!r.kl_grade || r.has_standard_kl()));
    }
  }
}
