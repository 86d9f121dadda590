#include "pfoa/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pfoa/error.hpp"
#include "pfoa/rng.hpp"

namespace pfoa::synth {

ClassProfile non_pfoa_profile() {
  return {{64.7, 8.3, 50.0, 86.0}, {30.0, 5.5, 16.0, 62.4}, {16.6, 16.0, 0.0, 91.0}, {1.1, 1.3, 0.0, 4.0}};
}

ClassProfile pfoa_profile() {
  return {{66.2, 8.1, 50.0, 86.0}, {32.7, 6.6, 19.7, 66.1}, {27.6, 17.8, 0.0, 92.0}, {2.5, 1.2, 0.0, 4.0}};
}

namespace {

constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

double pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

// P(a < Z <= b), accurate in either tail.
double mass(double a, double b) {
  if (a > 0.0) return 0.5 * (std::erfc(a / kSqrt2) - std::erfc(b / kSqrt2));
  return 0.5 * (std::erfc(-b / kSqrt2) - std::erfc(-a / kSqrt2));
}

double cdf(double z) { return 0.5 * std::erfc(-z / kSqrt2); }

template <typename F>
double bisect_increasing(F&& f, double target, double lo, double hi) {
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

void check_moments(const Moments& m, const char* what) {
  if (!(m.sd > 0.0)) throw ValidationError(std::string(what) + ": sd must be > 0");
  if (!(m.lo < m.mean && m.mean < m.hi)) throw ValidationError(std::string(what) + ": mean must lie inside the bounds");
}

Moments blend(const Moments& a, const Moments& b, double wa, double effect) {
  const auto mix = [&](double x, double y) {
    const double pooled = wa * x + (1.0 - wa) * y;
    return pooled + effect * (x - pooled);
  };
  return {mix(a.mean, b.mean), mix(a.sd, b.sd), mix(a.lo, b.lo), mix(a.hi, b.hi)};
}

double sample_truncated(std::mt19937_64& rng, double mu, const Moments& m) {
  for (int i = 0; i < 100000; ++i) {
    const double v = mu + m.sd * standard_normal(rng);
    if (v >= m.lo && v <= m.hi) return v;
  }
  return std::clamp(mu, m.lo, m.hi);
}

int sample_kl(std::mt19937_64& rng, const std::array<double, 5>& p) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (int k = 0; k < 4; ++k) {
    acc += p[static_cast<std::size_t>(k)];
    if (u < acc) return k;
  }
  return 4;
}

double round1(double v) { return std::round(v * 10.0) / 10.0; }

// Prior weight of a patellofemoral grade before conditioning on the label.
constexpr std::array<double, 4> kGradePrior = {0.55, 0.25, 0.13, 0.07};

struct GradeTable {
  std::vector<data::PatellofemoralGrades> combos[2];
  std::vector<double> weights[2];
};

const GradeTable& grade_table() {
  static const GradeTable table = [] {
    GradeTable t;
    for (int o = 0; o < 4; ++o) {
      for (int j = 0; j < 4; ++j) {
        for (int s = 0; s < 4; ++s) {
          for (int c = 0; c < 4; ++c) {
            const data::PatellofemoralGrades g{o, j, s, c};
            const int label = data::pfoa_label(g) ? 1 : 0;
            t.combos[label].push_back(g);
            t.weights[label].push_back(kGradePrior[o] * kGradePrior[j] * kGradePrior[s] * kGradePrior[c]);
          }
        }
      }
    }
    return t;
  }();
  return table;
}

data::PatellofemoralGrades sample_grades(std::mt19937_64& rng, bool label) {
  const auto& t = grade_table();
  const auto& w = t.weights[label ? 1 : 0];
  double total = 0.0;
  for (double v : w) total += v;
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    if (u < acc) return t.combos[label ? 1 : 0][i];
  }
  return t.combos[label ? 1 : 0].back();
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Smooth indicator of d < 0 with a 0.1 mm edge.
double inside(double d) { return 1.0 / (1.0 + std::exp(d / 0.1)); }

// Approximate signed distance (mm) to an axis-aligned ellipse.
double ellipse_distance(double x, double y, double cx, double cy, double ax, double ay) {
  const double r = std::hypot((x - cx) / ax, (y - cy) / ay);
  return (r - 1.0) * std::min(ax, ay);
}

}  // namespace

void validate(const SynthConfig& cfg) {
  if (cfg.n_subjects < 1) throw ValidationError("n_subjects must be >= 1");
  if (cfg.knees_per_subject != 1 && cfg.knees_per_subject != 2) {
    throw ValidationError("knees_per_subject must be 1 or 2");
  }
  if (!(cfg.prevalence > 0.0 && cfg.prevalence < 1.0)) throw ValidationError("prevalence must lie in (0, 1)");
  if (!(cfg.female_fraction >= 0.0 && cfg.female_fraction <= 1.0)) {
    throw ValidationError("female_fraction must lie in [0, 1]");
  }
  for (const auto* p : {&cfg.non_pfoa, &cfg.pfoa}) {
    check_moments(p->age, "age");
    check_moments(p->bmi, "bmi");
    check_moments(p->womac, "womac");
    if (!(p->kl.sd > 0.0) || !(p->kl.mean > 0.0 && p->kl.mean < 4.0)) {
      throw ValidationError("kl: sd must be > 0 and mean inside (0, 4)");
    }
  }
  if (!(cfg.clinical_effect >= 0.0)) throw ValidationError("clinical_effect must be >= 0");
  if (!(cfg.image_effect >= 0.0)) throw ValidationError("image_effect must be >= 0");
  if (!(cfg.spacing_mm > 0.0)) throw ValidationError("spacing_mm must be > 0");
  if (cfg.image_width * cfg.spacing_mm < 24.0 || cfg.image_height * cfg.spacing_mm < 28.0) {
    throw ValidationError("phantom field must be at least 24 x 28 mm");
  }
  if (!(cfg.noise_sd >= 0.0)) throw ValidationError("noise_sd must be >= 0");
  for (double r : {cfg.bmi_missing_rate, cfg.womac_missing_rate, cfg.kl_missing_rate}) {
    if (!(r >= 0.0 && r < 1.0)) throw ValidationError("missing rates must lie in [0, 1)");
  }
}

double truncated_mean(double mu, double sigma, double lo, double hi) {
  const double a = (lo - mu) / sigma;
  const double b = (hi - mu) / sigma;
  const double z = mass(a, b);
  if (!(z > 0.0)) return a > 0.0 ? lo : hi;
  return mu + sigma * (pdf(a) - pdf(b)) / z;
}

double solve_truncated_mu(const Moments& m) {
  return bisect_increasing([&](double mu) { return truncated_mean(mu, m.sd, m.lo, m.hi); }, m.mean,
                           m.lo - 10.0 * m.sd, m.hi + 10.0 * m.sd);
}

std::array<double, 5> kl_distribution(double mu, double sigma) {
  std::array<double, 5> p{};
  for (int k = 0; k < 5; ++k) {
    const double lo = k == 0 ? -INFINITY : (k - 0.5 - mu) / sigma;
    const double hi = k == 4 ? INFINITY : (k + 0.5 - mu) / sigma;
    p[static_cast<std::size_t>(k)] = cdf(hi) - cdf(lo);
  }
  return p;
}

double solve_kl_mu(double mean, double sigma) {
  const auto kl_mean = [&](double mu) {
    const auto p = kl_distribution(mu, sigma);
    double m = 0.0;
    for (int k = 0; k < 5; ++k) m += k * p[static_cast<std::size_t>(k)];
    return m;
  };
  return bisect_increasing(kl_mean, mean, -10.0 - 10.0 * sigma, 14.0 + 10.0 * sigma);
}

ClassProfile effective_profile(const SynthConfig& cfg, bool pfoa) {
  const double w_non = 1.0 - cfg.prevalence;
  const auto& self = pfoa ? cfg.pfoa : cfg.non_pfoa;
  const auto& other = pfoa ? cfg.non_pfoa : cfg.pfoa;
  const double w_self = pfoa ? cfg.prevalence : w_non;
  return {blend(self.age, other.age, w_self, cfg.clinical_effect),
          blend(self.bmi, other.bmi, w_self, cfg.clinical_effect),
          blend(self.womac, other.womac, w_self, cfg.clinical_effect),
          blend(self.kl, other.kl, w_self, cfg.clinical_effect)};
}

data::DatasetManifest generate_cohort(const SynthConfig& cfg) {
  validate(cfg);
  struct Solved {
    ClassProfile profile;
    double age_mu, bmi_mu, womac_mu;
    std::array<double, 5> kl;
  };
  Solved solved[2];
  for (int label = 0; label < 2; ++label) {
    auto& s = solved[label];
    s.profile = effective_profile(cfg, label == 1);
    s.age_mu = solve_truncated_mu(s.profile.age);
    s.bmi_mu = solve_truncated_mu(s.profile.bmi);
    s.womac_mu = solve_truncated_mu(s.profile.womac);
    s.kl = kl_distribution(solve_kl_mu(s.profile.kl.mean, s.profile.kl.sd), s.profile.kl.sd);
  }

  data::DatasetManifest m;
  m.provenance = "synthetic cohort seed " + std::to_string(cfg.seed);
  m.spacing_mm = cfg.spacing_mm;
  const int width = std::max(4, static_cast<int>(std::to_string(cfg.n_subjects).size()));
  for (int i = 0; i < cfg.n_subjects; ++i) {
    auto rng = make_stream(cfg.seed, 0x5b, static_cast<std::uint64_t>(i));
    std::string id = std::to_string(i + 1);
    id = "S" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(id.size()))), '0') + id;
    const bool label = uniform01(rng) < cfg.prevalence;
    const auto& s = solved[label ? 1 : 0];
    const auto sex = uniform01(rng) < cfg.female_fraction ? data::Sex::Female : data::Sex::Male;
    const double age = round1(sample_truncated(rng, s.age_mu, s.profile.age));
    const double bmi = round1(sample_truncated(rng, s.bmi_mu, s.profile.bmi));
    const bool bmi_missing = uniform01(rng) < cfg.bmi_missing_rate;

    std::vector<data::Side> sides;
    if (cfg.knees_per_subject == 2) sides = {data::Side::Left, data::Side::Right};
    else sides = {uniform01(rng) < 0.5 ? data::Side::Left : data::Side::Right};
    for (auto side : sides) {
      data::KneeRecord r;
      r.subject_id = id;
      r.side = side;
      r.visit = data::Visit::Baseline;
      r.age = age;
      r.sex = sex;
      if (!bmi_missing) r.bmi = bmi;
      const double womac = round1(sample_truncated(rng, s.womac_mu, s.profile.womac));
      const double pain = std::clamp(std::round(womac * 20.0 / 96.0 + 1.5 * standard_normal(rng)), 0.0, 20.0);
      if (uniform01(rng) >= cfg.womac_missing_rate) {
        r.womac_total = womac;
        r.womac_pain = pain;
      }
      const int kl = sample_kl(rng, s.kl);
      if (uniform01(rng) >= cfg.kl_missing_rate) r.kl_grade = kl;
      r.pf_grades = sample_grades(rng, label);
      r.pfoa = label;
      r.image_path = "images/" + r.key().str() + ".png";
      m.records.push_back(std::move(r));
    }
  }
  return m;
}

Phantom generate_phantom(const data::KneeRecord& record, const SynthConfig& cfg) {
  validate(cfg);
  if (!record.pf_grades) throw ValidationError(record.key().str() + " has no patellofemoral grades");
  const auto& g = *record.pf_grades;
  auto rng = make_stream(cfg.seed, 0x9a, fnv1a(record.key().str()));
  const double ie = cfg.image_effect;
  const double field_w = cfg.image_width * cfg.spacing_mm;
  const double field_h = cfg.image_height * cfg.spacing_mm;

  // Box of 6.4 x 12.8 mm, i.e. 32 x 64 pixels at 0.2 mm, on whole pixels.
  constexpr double kBoxW = 6.4;
  constexpr double kBoxH = 12.8;
  const double step = imaging::kStandardSpacingMm;
  const int bx = static_cast<int>(std::lround((6.0 + uniform01(rng) * (field_w - 6.0 - 10.0 - kBoxW)) / step));
  const int by = static_cast<int>(std::lround((6.0 + uniform01(rng) * (field_h - 12.0 - kBoxH)) / step));
  const RoiBox box{bx, by, static_cast<int>(kBoxW / step), static_cast<int>(kBoxH / step)};
  const double cx = (bx + box.w / 2.0) * step;
  const double cy = (by + box.h / 2.0) * step;
  // The patella and its articular gap sit well inside the box so a few
  // pixels of detector jitter do not cut the signs off.
  const double ax = 1.6 * (0.95 + 0.1 * uniform01(rng));
  const double ay = 3.7 * (0.95 + 0.1 * uniform01(rng));

  const double gap = std::max(0.1, 0.9 * (1.0 - 0.25 * g.jsn * ie));
  const double ost_r = 0.45 * g.osteophyte * ie * (0.8 + 0.4 * uniform01(rng));
  const double sclerosis = 0.12 * g.sclerosis * ie;
  struct Spot {
    double x, y;
  };
  std::vector<Spot> cysts;
  for (int c = 0; c < g.cysts; ++c) {
    const double t = 6.283185307179586 * uniform01(rng);
    const double rr = 0.55 * std::sqrt(uniform01(rng));
    cysts.push_back({cx + rr * ax * std::cos(t), cy + rr * ay * std::sin(t)});
  }
  const double cyst_depth = 0.45 * std::min(ie, 1.5);
  const double tilt_x = 2000.0 + 1000.0 * uniform01(rng);
  const double tilt_y = 1000.0 + 1000.0 * uniform01(rng);

  constexpr double kBone = 14000.0;
  constexpr double kFemur = 12000.0;
  imaging::Image img(cfg.image_width, cfg.image_height, cfg.spacing_mm, imaging::BitDepth::U16);
  const bool mirror = record.side == data::Side::Right;
  for (int py = 0; py < cfg.image_height; ++py) {
    for (int px = 0; px < cfg.image_width; ++px) {
      const double xm = (px + 0.5) * cfg.spacing_mm;
      const double x = mirror ? field_w - xm : xm;
      const double y = (py + 0.5) * cfg.spacing_mm;
      double v = 9000.0 + tilt_x * x / field_w + tilt_y * y / field_h;

      const double dy = y - cy;
      const double surface = cx + ax + gap + 0.08 * dy * dy;
      v += kFemur * inside(surface - x);

      const double in_patella = inside(ellipse_distance(x, y, cx, cy, ax, ay));
      double bone = in_patella;
      if (ost_r > 0.0) {
        for (double sgn : {-1.0, 1.0}) {
          const double d = ellipse_distance(x, y, cx + 0.6 * ax, cy + sgn * (ay + 0.2), ost_r, ost_r);
          bone = std::max(bone, inside(d));
        }
      }
      double patella = kBone * bone;
      if (sclerosis > 0.0 && x > cx + 0.55 * ax) patella += kBone * sclerosis * in_patella;
      for (const auto& c : cysts) patella -= kBone * cyst_depth * in_patella * inside(std::hypot(x - c.x, y - c.y) - 0.35);
      v += patella;
      if (cfg.noise_sd > 0.0) v += cfg.noise_sd * standard_normal(rng);
      img.at(px, py) = static_cast<std::uint16_t>(std::clamp(std::lround(v), 0L, 65535L));
    }
  }
  return {std::move(img), box};
}

}  // namespace pfoa::synth
