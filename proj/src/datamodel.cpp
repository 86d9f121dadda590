#include "pfoa/datamodel.hpp"

#include <array>
#include <charconv>
#include <set>
#include <sstream>
#include <system_error>

#include "pfoa/csv.hpp"
#include "pfoa/error.hpp"

namespace pfoa::data {

namespace {

constexpr std::size_t kColumns = 15;
constexpr std::array<std::string_view, kColumns> kColumnNames = {
    "subject_id", "side", "visit", "age", "sex", "bmi", "womac_total", "womac_pain",
    "kl", "ost", "jsn", "scl", "cyst", "pfoa", "image_path"};

std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

int parse_int(std::string_view s) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError("not an integer: '" + std::string(s) + "'");
  }
  return v;
}

void check_field(std::string_view value, std::string_view what) {
  if (value.find_first_of(",\n\r\"") != std::string_view::npos) {
    throw ValidationError(std::string(what) + " contains a comma, quote or newline: '" +
                          std::string(value) + "'");
  }
}

template <typename T, typename F>
void put_optional(std::ostringstream& os, const std::optional<T>& v, F&& fmt) {
  if (v) os << fmt(*v);
}

}  // namespace

std::string_view to_string(Side s) { return s == Side::Left ? "L" : "R"; }

std::string_view to_string(Visit v) {
  switch (v) {
    case Visit::Baseline: return "baseline";
    case Visit::M15: return "m15";
    case Visit::M30: return "m30";
    case Visit::M60: return "m60";
    case Visit::M84: return "m84";
  }
  return "baseline";
}

std::string_view to_string(Sex s) { return s == Sex::Female ? "F" : "M"; }

Side parse_side(std::string_view s) {
  if (s == "L") return Side::Left;
  if (s == "R") return Side::Right;
  throw ParseError("side must be L or R, got '" + std::string(s) + "'");
}

Visit parse_visit(std::string_view s) {
  if (s == "baseline") return Visit::Baseline;
  if (s == "m15") return Visit::M15;
  if (s == "m30") return Visit::M30;
  if (s == "m60") return Visit::M60;
  if (s == "m84") return Visit::M84;
  throw ParseError("unknown visit '" + std::string(s) + "'");
}

Sex parse_sex(std::string_view s) {
  if (s == "F") return Sex::Female;
  if (s == "M") return Sex::Male;
  throw ParseError("sex must be F or M, got '" + std::string(s) + "'");
}

void validate(const PatellofemoralGrades& g) {
  for (int v : {g.osteophyte, g.jsn, g.sclerosis, g.cysts}) {
    if (v < 0 || v > 3) {
      throw ValidationError("patellofemoral grade " + std::to_string(v) + " outside 0..3");
    }
  }
}

bool pfoa_label(const PatellofemoralGrades& g) {
  validate(g);
  if (g.osteophyte >= 2) return true;
  return g.jsn >= 1 && (g.osteophyte >= 1 || g.sclerosis >= 1 || g.cysts >= 1);
}

std::string RecordKey::str() const {
  std::string s = subject_id;
  s += '_';
  s += to_string(side);
  s += '_';
  s += to_string(visit);
  return s;
}

void validate(const KneeRecord& r) {
  if (r.subject_id.empty()) throw ValidationError("empty subject_id");
  if (!(r.age >= 0.0)) throw ValidationError("age must be >= 0 for " + r.key().str());
  if (r.bmi && !(*r.bmi > 0.0)) throw ValidationError("bmi must be > 0 for " + r.key().str());
  if (r.pf_grades) validate(*r.pf_grades);
}

void validate(const DatasetManifest& m) {
  std::set<RecordKey> seen;
  for (const auto& r : m.records) {
    validate(r);
    if (!seen.insert(r.key()).second) {
      throw ValidationError("duplicate record key " + r.key().str());
    }
  }
}

std::map<RecordKey, std::size_t> index_by_key(const DatasetManifest& m) {
  std::map<RecordKey, std::size_t> out;
  for (std::size_t i = 0; i < m.records.size(); ++i) out.emplace(m.records[i].key(), i);
  return out;
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw Error("cannot format double");
  return std::string(buf.data(), ptr);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError("not a number: '" + std::string(s) + "'");
  }
  return v;
}

DatasetManifest parse_manifest(std::string_view text) {
  DatasetManifest m;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim_cr(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    if (!header_seen) {
      if (line.front() == '#') {
        constexpr std::string_view kProv = "# provenance: ";
        constexpr std::string_view kSpacing = "# spacing_mm: ";
        if (line.starts_with(kProv)) m.provenance = std::string(line.substr(kProv.size()));
        if (line.starts_with(kSpacing)) m.spacing_mm = parse_double(line.substr(kSpacing.size()));
        continue;
      }
      if (line != kManifestHeader) {
        throw ParseError("line " + std::to_string(line_no) + ": header does not match manifest schema");
      }
      header_seen = true;
      continue;
    }
    const auto cells = csv::split(line);
    if (cells.size() != kColumns) {
      throw ParseError("row " + std::to_string(line_no) + ": expected " + std::to_string(kColumns) +
                       " columns, got " + std::to_string(cells.size()));
    }
    std::size_t col = 0;
    try {
      KneeRecord r;
      r.subject_id = std::string(cells[col]);
      if (r.subject_id.empty()) throw ParseError("empty subject_id");
      col = 1; r.side = parse_side(cells[col]);
      col = 2; r.visit = parse_visit(cells[col]);
      col = 3; r.age = parse_double(cells[col]);
      col = 4; r.sex = parse_sex(cells[col]);
      col = 5; if (!cells[col].empty()) r.bmi = parse_double(cells[col]);
      col = 6; if (!cells[col].empty()) r.womac_total = parse_double(cells[col]);
      col = 7; if (!cells[col].empty()) r.womac_pain = parse_double(cells[col]);
      col = 8; if (!cells[col].empty()) r.kl_grade = parse_int(cells[col]);
      const bool any_grade = !cells[9].empty() || !cells[10].empty() || !cells[11].empty() || !cells[12].empty();
      if (any_grade) {
        PatellofemoralGrades g;
        col = 9; g.osteophyte = parse_int(cells[col]);
        col = 10; g.jsn = parse_int(cells[col]);
        col = 11; g.sclerosis = parse_int(cells[col]);
        col = 12; g.cysts = parse_int(cells[col]);
        col = 9; validate(g);
        r.pf_grades = g;
      }
      col = 13;
      if (cells[col] == "1") r.pfoa = true;
      else if (cells[col] == "0") r.pfoa = false;
      else if (!cells[col].empty()) throw ParseError("pfoa must be 0, 1 or empty");
      col = 14; if (!cells[col].empty()) r.image_path = std::string(cells[col]);
      col = 3; validate(r);
      m.records.push_back(std::move(r));
    } catch (const Error& e) {
      throw ParseError("row " + std::to_string(line_no) + ", column " + std::string(kColumnNames[col]) +
                       ": " + e.what());
    }
  }
  if (!header_seen) throw ParseError("manifest has no header row");
  validate(m);
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(csv::read_file(path));
}

std::string format_manifest(const DatasetManifest& m) {
  validate(m);
  std::ostringstream os;
  check_field(m.provenance, "provenance");
  if (!m.provenance.empty()) os << "# provenance: " << m.provenance << '\n';
  os << "# spacing_mm: " << format_double(m.spacing_mm) << '\n';
  os << kManifestHeader << '\n';
  const auto dbl = [](double v) { return format_double(v); };
  for (const auto& r : m.records) {
    check_field(r.subject_id, "subject_id");
    os << r.subject_id << ',' << to_string(r.side) << ',' << to_string(r.visit) << ','
       << format_double(r.age) << ',' << to_string(r.sex) << ',';
    put_optional(os, r.bmi, dbl);
    os << ',';
    put_optional(os, r.womac_total, dbl);
    os << ',';
    put_optional(os, r.womac_pain, dbl);
    os << ',';
    if (r.kl_grade) os << *r.kl_grade;
    os << ',';
    if (r.pf_grades) {
      os << r.pf_grades->osteophyte << ',' << r.pf_grades->jsn << ',' << r.pf_grades->sclerosis << ','
         << r.pf_grades->cysts;
    } else {
      os << ",,,";
    }
    os << ',';
    if (r.pfoa) os << (*r.pfoa ? '1' : '0');
    os << ',';
    if (r.image_path) {
      check_field(*r.image_path, "image_path");
      os << *r.image_path;
    }
    os << '\n';
  }
  return os.str();
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  csv::write_file(path, format_manifest(m));
}

FilterResult exclusion_filter(const DatasetManifest& m,
                              const std::map<RecordKey, std::optional<RoiDetection>>& roi_results) {
  FilterResult res;
  res.kept.provenance = m.provenance;
  res.kept.spacing_mm = m.spacing_mm;
  for (const auto& r : m.records) {
    if (!r.image_path) {
      ++res.counts.missing_radiograph;
      continue;
    }
    if (!r.pfoa) {
      ++res.counts.missing_pfoa;
      continue;
    }
    if (r.kl_grade && !r.has_standard_kl()) {
      ++res.counts.nonstandard_kl;
      continue;
    }
    const auto it = roi_results.find(r.key());
    if (it == roi_results.end() || !it->second) {
      ++res.counts.roi_gate;
      continue;
    }
    res.kept.records.push_back(r);
  }
  return res;
}

}  // namespace pfoa::data
