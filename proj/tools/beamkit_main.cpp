// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// beamkit: mask-driven multichannel speech enhancement.
//
// Subcommands:
//   enhance    filter one multichannel recording down to one channel
//   compare    score a set of filters against shared statistics
//   simulate   render a synthetic scene (clean/noise/mix stems + manifest)
//
// Exit codes: 0 success, 1 file or data errors, 2 usage errors (unknown
// filter, bad flags), 3 degenerate statistics / numeric failure.

#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "beamkit/pipeline.hpp"

namespace {

struct RawMaskFlags {
  std::vector<std::string> masks;  // "oracle" or speech+noise paths
  double lcx_db = 0.0;
  double lcn_db = -10.0;
};

void add_mask_flags(CLI::App* cmd, RawMaskFlags& raw) {
  cmd->add_option("--masks", raw.masks,
                  "'oracle' (default; needs --clean/--noise) or a speech and "
                  "a noise mask file")
      ->expected(1, 2);
  cmd->add_option("--lcx-db", raw.lcx_db,
                  "local SNR above which a point is speech (dB)");
  cmd->add_option("--lcn-db", raw.lcn_db,
                  "local SNR at or below which a point is noise (dB)");
}

beamkit::MaskOptions resolve_mask_flags(const RawMaskFlags& raw) {
  beamkit::MaskOptions opt;
  opt.lcx_db = raw.lcx_db;
  opt.lcn_db = raw.lcn_db;
  if (raw.masks.empty() || (raw.masks.size() == 1 && raw.masks[0] == "oracle"))
    return opt;
  if (raw.masks.size() != 2)
    throw beamkit::UsageError(
        "--masks takes 'oracle' or two paths (speech noise)");
  opt.speech_path = raw.masks[0];
  opt.noise_path = raw.masks[1];
  return opt;
}

void add_stft_flags(CLI::App* cmd, beamkit::StftConfig& cfg) {
  cmd->add_option("--fft-size", cfg.fft_size, "analysis FFT size");
  cmd->add_option("--hop", cfg.hop, "analysis hop in samples");
}

int parse_reference(const std::string& raw) {
  if (raw == "auto") return -1;
  try {
    std::size_t used = 0;
    const int v = std::stoi(raw, &used);
    if (used != raw.size() || v < 0) throw std::invalid_argument(raw);
    return v;
  } catch (const std::exception&) {
    throw beamkit::UsageError("--ref wants 'auto' or a channel index");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"beamkit: mask-driven multichannel speech enhancement"};
  app.require_subcommand(1);
  app.set_version_flag("--version", beamkit::kToolVersion);

  // enhance
  beamkit::EnhanceOptions enh;
  RawMaskFlags enh_masks;
  std::string enh_ref = "auto";
  double enh_mu = 0.0, enh_alpha = 0.0;
  CLI::App* enhance = app.add_subcommand("enhance", "enhance one recording");
  enhance->add_option("input", enh.input, "multichannel WAV")->required();
  enhance->add_option("--out", enh.output, "enhanced WAV path")->required();
  enhance->add_option("--filter", enh.filter, "filter variant name");
  CLI::Option* enh_mu_opt =
      enhance->add_option("--mu", enh_mu, "trade-off override");
  CLI::Option* enh_alpha_opt = enhance->add_option(
      "--alpha", enh_alpha, "recursive smoothing constant (per-frame filtering)");
  enhance->add_option("--ref", enh_ref, "'auto' or reference channel index");
  enhance->add_option("--clean", enh.clean, "clean stem WAV (oracle masks)");
  enhance->add_option("--noise", enh.noise, "noise stem WAV (oracle masks)");
  enhance->add_option("--report", enh.report_path, "JSON report path");
  add_stft_flags(enhance, enh.stft);
  add_mask_flags(enhance, enh_masks);

  // compare
  beamkit::CompareOptions cmp;
  RawMaskFlags cmp_masks;
  std::string cmp_ref = "auto";
  double cmp_mu = 0.0;
  CLI::App* compare = app.add_subcommand("compare", "score a filter set");
  compare->add_option("input", cmp.mix, "mixture WAV")->required();
  compare->add_option("--clean", cmp.clean, "clean stem WAV")->required();
  compare->add_option("--noise", cmp.noise, "noise stem WAV")->required();
  compare->add_option("--filters", cmp.filters,
                      "comma-separated filter names (default: full catalogue)")
      ->delimiter(',');
  CLI::Option* cmp_mu_opt =
      compare->add_option("--mu", cmp_mu, "trade-off override");
  compare->add_option("--ref", cmp_ref, "'auto' or reference channel index");
  compare->add_option("--report", cmp.report_path, "JSON report path");
  compare->add_option("--out-dir", cmp.out_dir, "write one WAV per filter");
  add_stft_flags(compare, cmp.stft);
  add_mask_flags(compare, cmp_masks);

  // simulate
  beamkit::SimulateOptions sim;
  std::string noise_kind = "diffuse", steering = "gaussian";
  CLI::App* simulate = app.add_subcommand("simulate", "render a synthetic scene");
  simulate->add_option("--out-dir", sim.out_dir, "output directory")->required();
  simulate->add_option("--channels", sim.channels, "microphone count");
  simulate->add_option("--seconds", sim.seconds, "scene duration");
  simulate->add_option("--snr", sim.snr_db, "broadband SNR at channel 1 (dB)");
  simulate
      ->add_option("--noise-kind", noise_kind, "diffuse | directional | mixed")
      ->check(CLI::IsMember({"diffuse", "directional", "mixed"}));
  simulate->add_option("--steering", steering, "gaussian | planewave")
      ->check(CLI::IsMember({"gaussian", "planewave"}));
  simulate->add_option("--seed", sim.seed, "random seed");
  simulate->add_option("--manifest", sim.manifest_path, "manifest JSON path");
  add_stft_flags(simulate, sim.stft);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  try {
    if (*enhance) {
      if (*enh_mu_opt) enh.mu = enh_mu;
      if (*enh_alpha_opt) enh.alpha = enh_alpha;
      enh.reference = parse_reference(enh_ref);
      enh.masks = resolve_mask_flags(enh_masks);
      beamkit::run_enhance(enh);
    } else if (*compare) {
      if (*cmp_mu_opt) cmp.mu = cmp_mu;
      cmp.reference = parse_reference(cmp_ref);
      cmp.masks = resolve_mask_flags(cmp_masks);
      if (compare->count("--filters") > 0 && cmp.filters.empty())
        throw beamkit::UsageError("empty filter list");
      beamkit::run_compare(cmp);
    } else {
      sim.noise = noise_kind == "diffuse"
                      ? beamkit::NoiseKind::diffuse
                      : (noise_kind == "directional"
                             ? beamkit::NoiseKind::directional
                             : beamkit::NoiseKind::mixed);
      sim.steering = steering == "gaussian" ? beamkit::SteeringKind::gaussian
                                            : beamkit::SteeringKind::planewave;
      beamkit::run_simulate(sim);
    }
  } catch (const beamkit::UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const beamkit::DegenerateStatistics& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const beamkit::FileError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const beamkit::NumericalError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
