#pragma once

#include <array>
#include <cstdint>

#include "pfoa/box.hpp"
#include "pfoa/datamodel.hpp"
#include "pfoa/imaging.hpp"

namespace pfoa::synth {

// Normal truncated to [lo, hi]; `mean` is the mean after truncation.
struct Moments {
  double mean = 0.0;
  double sd = 1.0;
  double lo = 0.0;
  double hi = 0.0;
};

struct ClassProfile {
  Moments age;
  Moments bmi;
  Moments womac;
  Moments kl;  // discretized onto 0..4; lo/hi unused
};

// Class profiles from the published summary statistics of the reference cohort.
ClassProfile non_pfoa_profile();
ClassProfile pfoa_profile();

struct SynthConfig {
  int n_subjects = 1000;
  int knees_per_subject = 1;  // 1 (random side) or 2 (both sides)
  double prevalence = 0.19;
  double female_fraction = 0.6;
  ClassProfile non_pfoa = non_pfoa_profile();
  ClassProfile pfoa = pfoa_profile();
  // 1 keeps the class profiles; 0 moves both classes onto the pooled profile
  // so the clinical features carry no label information.
  double clinical_effect = 1.0;
  // Scales every label-dependent phantom feature; 0 removes them.
  double image_effect = 1.0;
  double spacing_mm = 0.25;
  int image_width = 128;
  int image_height = 160;
  double noise_sd = 700.0;
  double bmi_missing_rate = 0.02;
  double womac_missing_rate = 0.02;
  double kl_missing_rate = 0.01;
  std::uint64_t seed = 0;
};

void validate(const SynthConfig& cfg);

// Mean of N(mu, sigma) truncated to [lo, hi].
double truncated_mean(double mu, double sigma, double lo, double hi);

// Parent mu whose truncation to [lo, hi] has the requested mean.
double solve_truncated_mu(const Moments& m);

// Class probabilities of round-to-nearest N(mu, sigma) folded onto 0..4.
std::array<double, 5> kl_distribution(double mu, double sigma);
double solve_kl_mu(double mean, double sigma);

// Class profile after applying clinical_effect.
ClassProfile effective_profile(const SynthConfig& cfg, bool pfoa);

// Subjects "S0001", ...; label drawn per subject and shared by its knees;
// age, sex and BMI per subject; WOMAC, KL and patellofemoral grades per
// knee. Grades are drawn from the combinations whose pfoa_label equals the
// label. image_path is "images/<key>.png".
data::DatasetManifest generate_cohort(const SynthConfig& cfg);

struct Phantom {
  imaging::Image image;  // 16-bit, cfg.spacing_mm, native side
  RoiBox box;            // patellar ROI on the preprocessed (0.2 mm, left-facing) grid
};

// Lateral-view stand-in: smooth background with noise, an elliptical
// patella at a jittered position and the femoral condyle to its right (in
// left-knee orientation). Osteophyte grade grows bumps at both poles, JSN
// narrows the patellofemoral gap, sclerosis brightens the articular rim and
// cysts punch dark spots, all scaled by image_effect. Right knees are
// mirrored. Deterministic in (cfg.seed, record key).
Phantom generate_phantom(const data::KneeRecord& record, const SynthConfig& cfg);

}  // namespace pfoa::synth
