#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pfoa/box.hpp"

namespace pfoa::data {

enum class Side { Left, Right };
enum class Visit { Baseline, M15, M30, M60, M84 };
enum class Sex { Female, Male };

std::string_view to_string(Side s);
std::string_view to_string(Visit v);
std::string_view to_string(Sex s);
Side parse_side(std::string_view s);
Visit parse_visit(std::string_view s);
Sex parse_sex(std::string_view s);

// Patellofemoral semi-quantitative grades, each 0 (normal) to 3 (severe).
struct PatellofemoralGrades {
  int osteophyte = 0;
  int jsn = 0;
  int sclerosis = 0;
  int cysts = 0;

  friend bool operator==(const PatellofemoralGrades&, const PatellofemoralGrades&) = default;
};

void validate(const PatellofemoralGrades& g);

// Radiographic PFOA: osteophyte >= 2, or JSN >= 1 together with any
// osteophyte, sclerosis or cyst grade >= 1. Throws ValidationError when a
// grade lies outside 0..3.
bool pfoa_label(const PatellofemoralGrades& g);

// Identity of one knee at one visit.
struct RecordKey {
  std::string subject_id;
  Side side = Side::Left;
  Visit visit = Visit::Baseline;

  auto operator<=>(const RecordKey&) const = default;
  bool operator==(const RecordKey&) const = default;

  // "<subject>_<L|R>_<visit>", safe for file names.
  std::string str() const;
};

// One knee at one visit. Optional fields are missing, never zero-filled.
//
// kl_grade holds the value as read; codes outside 0..4 are "non-standard"
// and removed by exclusion_filter rather than rejected at load time.
struct KneeRecord {
  std::string subject_id;
  Side side = Side::Left;
  Visit visit = Visit::Baseline;
  double age = 0.0;
  Sex sex = Sex::Female;
  std::optional<double> bmi;
  std::optional<double> womac_total;
  std::optional<double> womac_pain;
  std::optional<int> kl_grade;
  std::optional<PatellofemoralGrades> pf_grades;
  std::optional<bool> pfoa;
  std::optional<std::string> image_path;

  RecordKey key() const { return {subject_id, side, visit}; }
  bool has_standard_kl() const { return kl_grade && *kl_grade >= 0 && *kl_grade <= 4; }

  friend bool operator==(const KneeRecord&, const KneeRecord&) = default;
};

// Checks age >= 0, bmi > 0, grades in range. KL is not range-checked here.
void validate(const KneeRecord& r);

struct DatasetManifest {
  std::vector<KneeRecord> records;
  std::string provenance;
  double spacing_mm = 0.2;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

// Throws ValidationError on duplicate (subject, side, visit).
void validate(const DatasetManifest& m);

// Index of each record key in manifest order.
std::map<RecordKey, std::size_t> index_by_key(const DatasetManifest& m);

inline constexpr std::string_view kManifestHeader =
    "subject_id,side,visit,age,sex,bmi,womac_total,womac_pain,kl,ost,jsn,scl,cyst,pfoa,image_path";

// CSV manifest. Lines starting with '#' before the header carry metadata
// ("# provenance: ...", "# spacing_mm: ..."). Doubles are written in
// shortest round-trip form so save -> load is bit-exact.
DatasetManifest load_manifest(const std::filesystem::path& path);
DatasetManifest parse_manifest(std::string_view text);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
std::string format_manifest(const DatasetManifest& m);

struct ExclusionCounts {
  std::size_t missing_radiograph = 0;
  std::size_t missing_pfoa = 0;
  std::size_t nonstandard_kl = 0;
  std::size_t roi_gate = 0;

  std::size_t total() const { return missing_radiograph + missing_pfoa + nonstandard_kl + roi_gate; }
  friend bool operator==(const ExclusionCounts&, const ExclusionCounts&) = default;
};

struct FilterResult {
  DatasetManifest kept;
  ExclusionCounts counts;
};

// Keeps records with an image, a PFOA status, a standard (or missing) KL
// grade and a detection that passed the ROI gate. Each dropped record is
// counted once, under the first failing check in that order. A record with
// no entry in roi_results counts as a gate failure.
FilterResult exclusion_filter(const DatasetManifest& m,
                              const std::map<RecordKey, std::optional<RoiDetection>>& roi_results);

// Shortest decimal that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view s);

}  // namespace pfoa::data
