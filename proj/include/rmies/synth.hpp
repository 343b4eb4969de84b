// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rmies/config.hpp"
#include "rmies/random.hpp"
#include "rmies/spectrum.hpp"

#include <cstdint>
#include <vector>

namespace rmies::synth {

enum class BandShape { gaussian, lorentzian };

struct BandSpec {
  double center = 0.0;     // cm^-1
  double fwhm = 1.0;       // cm^-1
  double amplitude = 0.0;  // AU at the centre
  BandShape shape = BandShape::gaussian;

  /// Profile value at wavenumber `nu`.
  double operator()(double nu) const;
  /// Integral over the whole real line.
  double analytic_area() const;
};

struct ClassTemplate {
  int class_id = 0;
  std::vector<BandSpec> bands;
  double amplitude_jitter = 0.0;  // relative sigma per band
  double center_jitter = 0.0;     // cm^-1 sigma per band

  /// ConfigError on empty bands, fwhm <= 0, negative amplitude or a centre outside grid.
  void validate(const WavenumberGrid& grid) const;
};

/// Five tissue-like classes with 4-8 bands each, every one carrying an
/// amide-I-like band near 1650 cm^-1.
std::vector<ClassTemplate> default_templates();

/// Reads `[class N]` sections with `band = <gaussian|lorentzian> center fwhm amplitude`
/// lines plus optional `amplitude_jitter` and `center_jitter`.
std::vector<ClassTemplate> templates_from_config(const KeyValueConfig& cfg);
KeyValueConfig templates_to_config(const std::vector<ClassTemplate>& templates);

struct DistortionParams {
  double radius_um = 5.0;
  double n_avg = 1.3;
  double scatter_weight = 0.0;   // g, AU
  double baseline_offset = 0.0;  // c, AU
  double baseline_slope = 0.0;   // m, AU per cm^-1
  double multiplicative = 1.0;   // h
  double noise_sigma = 0.0;      // AU

  void validate() const;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double sample(Rng& rng) const;
};

struct DistortionSampler {
  Range radius_um{2.0, 8.0};
  Range n_avg{1.1, 1.5};
  Range scatter_weight{0.0, 1.0};
  Range baseline_offset{-0.1, 0.1};
  Range baseline_slope{-0.1 / 850.0, 0.1 / 850.0};
  Range multiplicative{0.8, 1.2};
  double noise_sigma = 0.002;

  /// Every parameter pinned to the identity distortion.
  static DistortionSampler none();
  DistortionParams sample(std::uint64_t seed) const;
};

/// Sum of jittered band profiles, clipped at zero. Deterministic in `seed`.
Spectrum generate_pure(const ClassTemplate& tmpl, const GridPtr& grid, std::uint64_t seed);

/// Zero-jitter spectrum of a template.
Spectrum nominal_pure(const ClassTemplate& tmpl, const GridPtr& grid);

/// Mean of the nominal spectra of all templates; the default initial reference.
Spectrum mean_reference(const std::vector<ClassTemplate>& templates, const GridPtr& grid);

/// raw = c + m nu + h pure + g Q(nu; a, n_avg) + N(0, noise_sigma^2).
Spectrum distort(const Spectrum& pure, const DistortionParams& p, std::uint64_t seed);

/// n_per_class spectra per template, interleaved: item i has class
/// templates[i % K]. Item i uses streams derive_seed(seed, kPure, i) and
/// derive_seed(seed, kDistortion, i); noise uses derive_seed(seed, kNoise, i).
LabeledDataset generate_dataset(const std::vector<ClassTemplate>& templates, Index n_per_class,
                                const DistortionSampler& sampler, const GridPtr& grid, std::uint64_t seed,
                                int threads = 1);

}  // namespace rmies::synth
