// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// End-to-end drivers behind the command-line tool: enhance a recording with
// one filter, compare a set of filters against shared statistics, and render
// synthetic scenes to disk. Each driver returns the JSON report it writes so
// callers and tests can inspect results without re-reading files.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "beamkit/complex_linalg.hpp"
#include "beamkit/errors.hpp"
#include "beamkit/filters.hpp"
#include "beamkit/mask_io.hpp"
#include "beamkit/masks.hpp"
#include "beamkit/metrics.hpp"
#include "beamkit/scenes.hpp"
#include "beamkit/stats.hpp"
#include "beamkit/stft.hpp"
#include "beamkit/wav.hpp"
#include "beamkit/weights.hpp"

namespace beamkit {

inline constexpr double kRequiredSampleRate = 16000.0;
inline constexpr int kReportSchemaVersion = 1;
inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr int kFvPseudoStates = 16;

struct MaskOptions {
  // Empty paths select oracle masks (clean/noise stems required).
  std::string speech_path;
  std::string noise_path;
  double lcx_db = 0.0;
  double lcn_db = -10.0;

  bool from_files() const { return !speech_path.empty(); }
};

struct EnhanceOptions {
  std::string input;
  std::string output;
  std::string report_path;  // optional
  std::string clean;        // stem paths, required for oracle masks
  std::string noise;
  std::string filter = "r1mwf-mug";
  std::optional<double> mu;
  std::optional<double> alpha;  // set: recursive per-frame filtering
  int reference = -1;           // -1: pick by cross-correlation
  StftConfig stft;
  MaskOptions masks;
};

struct CompareOptions {
  std::string mix;
  std::string clean;
  std::string noise;
  std::vector<std::string> filters;  // empty: full catalogue
  std::optional<double> mu;
  int reference = -1;
  StftConfig stft;
  MaskOptions masks;
  std::string report_path;  // optional
  std::string out_dir;      // optional: write one wav per filter
};

struct SimulateOptions {
  int channels = 6;
  double seconds = 2.0;
  double snr_db = 0.0;
  NoiseKind noise = NoiseKind::diffuse;
  SteeringKind steering = SteeringKind::gaussian;
  std::uint64_t seed = 1;
  StftConfig stft;
  std::string out_dir = ".";
  std::string manifest_path;  // default: <out_dir>/manifest.json
};

namespace detail {

inline Spectrogram load_spectrogram(const std::string& path,
                                    const StftConfig& cfg, AudioBuffer* keep) {
  AudioBuffer buf = read_wav(path);
  if (buf.sample_rate != kRequiredSampleRate)
    throw FileError(path + ": sample rate must be 16000 Hz");
  Spectrogram spec = analyze(buf.samples, cfg);
  if (keep) *keep = std::move(buf);
  return spec;
}

inline int resolve_reference(const Spectrogram& spec, int requested) {
  if (requested >= 0) {
    if (requested >= spec.channels)
      throw UsageError("reference channel out of range");
    return requested;
  }
  return spec.channels == 1 ? 0 : select_reference(spec).channel;
}

// Per-element median across the channel planes of a mask file.
inline std::vector<double> median_plane(const MaskFile& mf) {
  const std::size_t plane = std::size_t(mf.frames) * std::size_t(mf.bins);
  std::vector<double> out(plane);
  std::vector<double> vals(static_cast<std::size_t>(mf.channels));
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < mf.channels; ++c)
      vals[std::size_t(c)] = mf.values[std::size_t(c) * plane + i];
    std::sort(vals.begin(), vals.end());
    const std::size_t n = vals.size();
    out[i] = (n % 2 == 1) ? vals[n / 2]
                          : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
  }
  return out;
}

inline MaskFile load_mask_checked(const std::string& path,
                                  const std::string& quantity,
                                  const Spectrogram& spec) {
  MaskFile mf = read_mask_file(path);
  if (mf.quantity != quantity)
    throw FileError(path + ": expected a " + quantity + " mask, got " +
                    mf.quantity);
  if (mf.frames != spec.frames || mf.bins != spec.bins)
    throw FileError(path + ": mask shape does not match the analysis grid");
  if (mf.channels != 1 && mf.channels != spec.channels)
    throw FileError(path + ": mask channels must be 1 or match the input");
  return mf;
}

struct MaskSetup {
  MaskPair fused;
  std::string source;  // "oracle" or "files"
};

inline MaskSetup resolve_masks(const MaskOptions& opt, const Spectrogram& mix,
                               const Spectrogram* clean,
                               const Spectrogram* noise) {
  MaskSetup setup;
  if (opt.from_files()) {
    if (opt.noise_path.empty())
      throw UsageError("mask files require both a speech and a noise path");
    const MaskFile ms = load_mask_checked(opt.speech_path, "speech", mix);
    const MaskFile mn = load_mask_checked(opt.noise_path, "noise", mix);
    setup.fused.frames = mix.frames;
    setup.fused.bins = mix.bins;
    setup.fused.speech = median_plane(ms);
    setup.fused.noise = median_plane(mn);
    setup.source = "files";
    return setup;
  }
  if (!clean || !noise)
    throw UsageError("oracle masks require --clean and --noise stems");
  setup.fused =
      median_fuse(oracle_masks(*clean, *noise, opt.lcx_db, opt.lcn_db));
  setup.source = "oracle";
  return setup;
}

// Time-varying filtering for recursive statistics: one weight set per frame
// from the smoothing state at that frame.
inline Spectrogram apply_streaming(const std::string& variant,
                                   const Spectrogram& mix,
                                   const CovariancePair& cov, int ref,
                                   std::optional<double> mu) {
  std::vector<BeamformerWeights> per_frame;
  per_frame.reserve(std::size_t(mix.frames));
  for (int l = 0; l < mix.frames; ++l) {
    BeamformerWeights w;
    w.variant = variant;
    w.channels = mix.channels;
    w.bins = mix.bins;
    w.reference = ref;
    w.data.resize(std::size_t(mix.bins) * mix.channels);
    for (int k = 0; k < mix.bins; ++k) {
      cvec h;
      try {
        h = compute_weights_bin(variant, cov.xx_frames[std::size_t(l)][std::size_t(k)],
                                cov.nn_frames[std::size_t(l)][std::size_t(k)], ref, mu);
      } catch (const NumericalError& e) {
        throw DegenerateStatistics(k, variant, e.what());
      }
      std::copy(h.begin(), h.end(), w.bin(k).begin());
    }
    if (!w.finite())
      throw NumericalError("streaming weights are not finite: " + variant);
    per_frame.push_back(std::move(w));
  }
  return apply_weights(mix, per_frame);
}

inline Spectrogram extract_channel(const Spectrogram& spec, int c) {
  Spectrogram out(1, spec.frames, spec.bins);
  for (int l = 0; l < spec.frames; ++l)
    for (int k = 0; k < spec.bins; ++k) out.at(0, l, k) = spec.at(c, l, k);
  return out;
}

inline double channel_power(const Spectrogram& spec, int c) {
  double p = 0.0;
  for (int l = 0; l < spec.frames; ++l)
    for (int k = 0; k < spec.bins; ++k) p += std::norm(spec.at(c, l, k));
  return p;
}

inline std::optional<double> try_ratio_db(double num, double den) {
  if (!(num > 0.0) || !(den > 0.0)) return std::nullopt;
  return 10.0 * std::log10(num / den);
}

inline double ratio_db(double num, double den) {
  const std::optional<double> v = try_ratio_db(num, den);
  if (!v) throw NumericalError("snr: non-positive signal power");
  return *v;
}

// Broadband SNR of filtered stems: the filter is applied to the clean and
// noise spectrograms separately and the output powers are compared.
inline double filtered_snr_db(const BeamformerWeights& w,
                              const Spectrogram& clean,
                              const Spectrogram& noise) {
  const Spectrogram fs = apply_weights(clean, w);
  const Spectrogram fn = apply_weights(noise, w);
  return ratio_db(channel_power(fs, 0), channel_power(fn, 0));
}

// Mean over bins of the per-bin SNR quotient h^H Pxx h / h^H Pnn h in dB,
// evaluated on the estimated covariances. Bins where either quadratic form
// is non-positive are skipped.
inline double model_snr_db(const BeamformerWeights& w,
                           const CovariancePair& cov) {
  double sum = 0.0;
  int used = 0;
  for (int k = 0; k < w.bins; ++k) {
    const auto h = w.bin(k);
    const cvec hv(h.begin(), h.end());
    double num = 0.0, den = 0.0;
    const HermitianMatrix& xx = cov.xx[std::size_t(k)];
    const HermitianMatrix& nn = cov.nn[std::size_t(k)];
    for (int i = 0; i < w.channels; ++i)
      for (int j = 0; j < w.channels; ++j) {
        const cplx hij = std::conj(hv[std::size_t(i)]) * hv[std::size_t(j)];
        num += (hij * xx.at(i, j)).real();
        den += (hij * nn.at(i, j)).real();
      }
    if (num > 0.0 && den > 0.0) {
      sum += 10.0 * std::log10(num / den);
      ++used;
    }
  }
  if (used == 0) throw NumericalError("model snr: no usable bins");
  return sum / used;
}

struct ResidualStats {
  double mean = 0.0;
  double stdev = 0.0;
};

inline ResidualStats residual_stats(const BeamformerWeights& w,
                                    const CovariancePair& cov) {
  std::vector<double> r(static_cast<std::size_t>(w.bins));
  for (int k = 0; k < w.bins; ++k) {
    const auto h = w.bin(k);
    // Measure against the same (possibly loaded) statistics the driver used.
    r[std::size_t(k)] = residual_noise_power(
        cvec(h.begin(), h.end()),
        loaded_noise(cov.xx[std::size_t(k)], cov.nn[std::size_t(k)]));
  }
  ResidualStats s;
  for (double v : r) s.mean += v;
  s.mean /= double(r.size());
  for (double v : r) s.stdev += (v - s.mean) * (v - s.mean);
  s.stdev = std::sqrt(s.stdev / double(r.size()));
  return s;
}

// Largest deviation from collinearity between two weight sets, measured as
// 1 - |<a,b>| / (|a| |b|), maximised over bins. Zero-norm bins are skipped.
inline double collinearity_error(const BeamformerWeights& a,
                                 const BeamformerWeights& b) {
  double worst = 0.0;
  for (int k = 0; k < a.bins; ++k) {
    const auto ha = a.bin(k);
    const auto hb = b.bin(k);
    cplx dot{0.0, 0.0};
    double na = 0.0, nb = 0.0;
    for (int i = 0; i < a.channels; ++i) {
      dot += std::conj(ha[std::size_t(i)]) * hb[std::size_t(i)];
      na += std::norm(ha[std::size_t(i)]);
      nb += std::norm(hb[std::size_t(i)]);
    }
    if (!(na > 0.0) || !(nb > 0.0)) continue;
    worst = std::max(worst, 1.0 - std::abs(dot) / std::sqrt(na * nb));
  }
  return worst;
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FileError("cannot create " + path);
  f << j.dump(2) << '\n';
  if (!f) throw FileError("write failed: " + path);
}

inline nlohmann::json stft_json(const StftConfig& cfg) {
  return {{"fft_size", cfg.fft_size},
          {"hop", cfg.hop},
          {"sample_rate", cfg.sample_rate}};
}

}  // namespace detail

inline nlohmann::json run_enhance(const EnhanceOptions& opt) {
  opt.stft.validate();
  if (opt.input.empty() || opt.output.empty())
    throw UsageError("enhance requires an input and an output path");

  const Spectrogram mix = detail::load_spectrogram(opt.input, opt.stft, nullptr);
  std::optional<Spectrogram> clean, noise;
  if (!opt.clean.empty())
    clean = detail::load_spectrogram(opt.clean, opt.stft, nullptr);
  if (!opt.noise.empty())
    noise = detail::load_spectrogram(opt.noise, opt.stft, nullptr);
  for (const Spectrogram* s : {clean ? &*clean : nullptr, noise ? &*noise : nullptr})
    if (s && !s->same_shape(mix))
      throw FileError("stem shape does not match the input recording");

  if (!is_known_variant(opt.filter, opt.mu.has_value()))
    throw UsageError("unknown filter variant: " + opt.filter);

  const int ref = detail::resolve_reference(mix, opt.reference);
  const detail::MaskSetup masks = detail::resolve_masks(
      opt.masks, mix, clean ? &*clean : nullptr, noise ? &*noise : nullptr);

  nlohmann::json report{
      {"schema_version", kReportSchemaVersion},
      {"version", kToolVersion},
      {"command", "enhance"},
      {"filter", opt.filter},
      {"stft", detail::stft_json(opt.stft)},
      {"channels", mix.channels},
      {"frames", mix.frames},
      {"bins", mix.bins},
      {"reference_channel", ref},
      {"mask_source", masks.source},
      {"statistics", opt.alpha ? "recursive" : "utterance"},
      {"output", opt.output}};
  if (opt.mu) report["mu"] = *opt.mu;
  if (opt.alpha) report["alpha"] = *opt.alpha;

  Spectrogram out(1, mix.frames, mix.bins);
  if (opt.alpha) {
    const CovariancePair cov = covariance_recursive(mix, masks.fused, *opt.alpha);
    out = detail::apply_streaming(opt.filter, mix, cov, ref, opt.mu);
  } else {
    const CovariancePair cov = covariance_utterance(mix, masks.fused);
    const BeamformerWeights w = compute_weights(opt.filter, cov, ref, opt.mu);
    out = apply_weights(mix, w);
    const detail::ResidualStats rs = detail::residual_stats(w, cov);
    report["residual_noise_mean"] = rs.mean;
    report["residual_noise_std"] = rs.stdev;
    if (clean && noise) {
      const Spectrogram fs = apply_weights(*clean, w);
      const Spectrogram fn = apply_weights(*noise, w);
      if (const auto snr = detail::try_ratio_db(detail::channel_power(fs, 0),
                                                detail::channel_power(fn, 0)))
        report["output_snr_db"] = *snr;
    }
  }
  if (clean)
    report["sd_mean_db"] =
        sd_metric(out, detail::extract_channel(*clean, ref),
                  opt.stft.sample_rate)
            .mean;

  AudioBuffer result;
  result.sample_rate = opt.stft.sample_rate;
  result.samples = synthesize(out, opt.stft);
  write_wav_float32(opt.output, result);

  if (clean && noise)
    if (const auto snr =
            detail::try_ratio_db(detail::channel_power(*clean, ref),
                                 detail::channel_power(*noise, ref)))
      report["input_snr_db"] = *snr;
  if (!opt.report_path.empty()) detail::write_json(opt.report_path, report);
  return report;
}

inline nlohmann::json run_compare(const CompareOptions& opt) {
  opt.stft.validate();
  if (opt.mix.empty() || opt.clean.empty() || opt.noise.empty())
    throw UsageError("compare requires mix, clean and noise paths");

  const Spectrogram mix = detail::load_spectrogram(opt.mix, opt.stft, nullptr);
  const Spectrogram clean = detail::load_spectrogram(opt.clean, opt.stft, nullptr);
  const Spectrogram noise = detail::load_spectrogram(opt.noise, opt.stft, nullptr);
  if (!clean.same_shape(mix) || !noise.same_shape(mix))
    throw FileError("stem shapes do not match the mixture");

  std::vector<std::string> names =
      opt.filters.empty() ? catalogue() : opt.filters;
  if (names.empty()) throw UsageError("no filters requested");
  for (const std::string& n : names)
    if (!is_known_variant(n, opt.mu.has_value()))
      throw UsageError("unknown filter variant: " + n);

  const int ref = detail::resolve_reference(mix, opt.reference);
  const detail::MaskSetup masks =
      detail::resolve_masks(opt.masks, mix, &clean, &noise);
  const CovariancePair cov = covariance_utterance(mix, masks.fused);

  const Spectrogram clean_ref = detail::extract_channel(clean, ref);
  const double input_snr = detail::ratio_db(detail::channel_power(clean, ref),
                                            detail::channel_power(noise, ref));

  // The distortion-free MWF limit serves as the reference condition for the
  // feature-variance comparison.
  const BeamformerWeights baseline_w = compute_weights("r1mwf-0", cov, ref);
  const std::vector<double> baseline_signal =
      synthesize(apply_weights(mix, baseline_w), opt.stft).front();
  FeatureMatrix baseline_feat = cepstral_features(baseline_signal, opt.stft);
  std::optional<std::string> fv_error;
  try {
    baseline_feat.labels = pseudo_states(baseline_feat, kFvPseudoStates);
  } catch (const NumericalError& e) {
    fv_error = e.what();
  }

  if (!opt.out_dir.empty())
    std::filesystem::create_directories(opt.out_dir);

  nlohmann::json filters = nlohmann::json::array();
  std::vector<std::pair<std::string, double>> snr_rank, sd_rank;
  std::vector<std::pair<std::string, BeamformerWeights>> r1_family;

  for (const std::string& name : names) {
    const BeamformerWeights w = compute_weights(name, cov, ref, opt.mu);
    const Spectrogram out_spec = apply_weights(mix, w);
    const std::vector<double> out_signal =
        synthesize(out_spec, opt.stft).front();

    nlohmann::json entry{{"name", name}};
    entry["output_snr_db"] = detail::filtered_snr_db(w, clean, noise);
    entry["output_snr_model_db"] = detail::model_snr_db(w, cov);
    const detail::ResidualStats rs = detail::residual_stats(w, cov);
    entry["residual_noise_mean"] = rs.mean;
    entry["residual_noise_std"] = rs.stdev;
    const SdScore sd = sd_metric(out_spec, clean_ref, opt.stft.sample_rate);
    entry["sd_mean_db"] = sd.mean;

    if (fv_error) {
      entry["fv_percent"] = nullptr;
    } else {
      FeatureMatrix feat = cepstral_features(out_signal, opt.stft);
      feat.labels = baseline_feat.labels;  // frame-aligned states
      entry["fv_percent"] = fv_metric(feat, baseline_feat).percentage;
    }

    snr_rank.emplace_back(name, entry["output_snr_db"].get<double>());
    sd_rank.emplace_back(name, sd.mean);
    if (name.rfind("r1mwf", 0) == 0) r1_family.emplace_back(name, w);

    if (!opt.out_dir.empty()) {
      AudioBuffer ab;
      ab.sample_rate = opt.stft.sample_rate;
      ab.samples = synthesize(out_spec, opt.stft);
      write_wav_float32(
          (std::filesystem::path(opt.out_dir) / (name + ".wav")).string(), ab);
    }
    filters.push_back(std::move(entry));
  }

  std::stable_sort(snr_rank.begin(), snr_rank.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::stable_sort(sd_rank.begin(), sd_rank.end(),
                   [](const auto& a, const auto& b) { return a.second < b.second; });
  nlohmann::json snr_names = nlohmann::json::array(),
                 sd_names = nlohmann::json::array();
  for (const auto& [n, v] : snr_rank) snr_names.push_back(n);
  for (const auto& [n, v] : sd_rank) sd_names.push_back(n);

  double collinearity = 0.0;
  for (std::size_t i = 0; i < r1_family.size(); ++i)
    for (std::size_t j = i + 1; j < r1_family.size(); ++j)
      collinearity = std::max(
          collinearity, detail::collinearity_error(r1_family[i].second,
                                                   r1_family[j].second));

  nlohmann::json report{{"schema_version", kReportSchemaVersion},
                        {"version", kToolVersion},
                        {"command", "compare"},
                        {"stft", detail::stft_json(opt.stft)},
                        {"channels", mix.channels},
                        {"frames", mix.frames},
                        {"bins", mix.bins},
                        {"reference_channel", ref},
                        {"mask_source", masks.source},
                        {"input_snr_db", input_snr},
                        {"filters", std::move(filters)},
                        {"ranking_by_output_snr", std::move(snr_names)},
                        {"ranking_by_sd", std::move(sd_names)}};
  if (opt.mu) report["mu"] = *opt.mu;
  if (r1_family.size() > 1) report["r1mwf_collinearity_max"] = collinearity;
  if (fv_error) report["fv_error"] = *fv_error;
  if (!opt.report_path.empty()) detail::write_json(opt.report_path, report);
  return report;
}

inline nlohmann::json run_simulate(const SimulateOptions& opt) {
  opt.stft.validate();
  if (opt.stft.sample_rate != kRequiredSampleRate)
    throw UsageError("simulate renders 16 kHz audio only");
  const auto total =
      static_cast<std::size_t>(opt.seconds * opt.stft.sample_rate);
  if (total < std::size_t(opt.stft.fft_size))
    throw UsageError("duration shorter than one analysis frame");
  const int frames =
      int((total - std::size_t(opt.stft.fft_size)) / std::size_t(opt.stft.hop)) + 1;

  SceneConfig cfg;
  cfg.channels = opt.channels;
  cfg.bins = opt.stft.bins();
  cfg.frames = frames;
  cfg.snr_db = opt.snr_db;
  cfg.noise = opt.noise;
  cfg.steering = opt.steering;
  cfg.seed = opt.seed;
  cfg.sample_rate = opt.stft.sample_rate;
  const SyntheticScene scene = generate_scene(cfg);

  std::filesystem::create_directories(opt.out_dir);
  const std::filesystem::path dir(opt.out_dir);

  AudioBuffer buf;
  buf.sample_rate = opt.stft.sample_rate;
  const std::vector<std::vector<double>> clean_td =
      synthesize(scene.clean, opt.stft);
  std::vector<std::vector<double>> noise_td = synthesize(scene.noise, opt.stft);

  double ps = 0.0, pn = 0.0;
  for (std::size_t i = 0; i < clean_td.front().size(); ++i) {
    ps += clean_td.front()[i] * clean_td.front()[i];
    pn += noise_td.front()[i] * noise_td.front()[i];
  }
  // The scene is normalized in the transform domain; synthesis of the two
  // independent spectrograms perturbs the time-domain ratio by a few
  // hundredths of a dB. One scalar across all noise channels pins the stem
  // SNR at channel 1 exactly without touching the spatial structure.
  if (ps > 0.0 && pn > 0.0) {
    const double want = ps / std::pow(10.0, opt.snr_db / 10.0);
    const double a = std::sqrt(want / pn);
    for (std::vector<double>& ch : noise_td)
      for (double& v : ch) v *= a;
    pn = want;
  }

  buf.samples = clean_td;
  write_wav_float32((dir / "clean.wav").string(), buf);
  buf.samples = noise_td;
  write_wav_float32((dir / "noise.wav").string(), buf);

  for (int c = 0; c < opt.channels; ++c)
    for (std::size_t i = 0; i < buf.samples[std::size_t(c)].size(); ++i)
      buf.samples[std::size_t(c)][i] =
          clean_td[std::size_t(c)][i] + noise_td[std::size_t(c)][i];
  write_wav_float32((dir / "mix.wav").string(), buf);

  const char* noise_name =
      opt.noise == NoiseKind::diffuse
          ? "diffuse"
          : (opt.noise == NoiseKind::directional ? "directional" : "mixed");
  nlohmann::json manifest{
      {"schema_version", kReportSchemaVersion},
      {"version", kToolVersion},
      {"command", "simulate"},
      {"stft", detail::stft_json(opt.stft)},
      {"channels", opt.channels},
      {"seconds", opt.seconds},
      {"frames", frames},
      {"bins", cfg.bins},
      {"snr_db", opt.snr_db},
      {"noise_kind", noise_name},
      {"steering",
       opt.steering == SteeringKind::gaussian ? "gaussian" : "planewave"},
      {"seed", opt.seed},
      {"files",
       {{"clean", "clean.wav"}, {"noise", "noise.wav"}, {"mix", "mix.wav"}}},
      {"time_snr_db", detail::ratio_db(ps, pn)}};
  const std::string mpath = opt.manifest_path.empty()
                                ? (dir / "manifest.json").string()
                                : opt.manifest_path;
  detail::write_json(mpath, manifest);
  return manifest;
}

}  // namespace beamkit
