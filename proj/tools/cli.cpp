#include "cli.hpp"

#include <pthread.h>
#include <signal.h>

#include <CLI11.hpp>
#include <chrono>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "bench.hpp"
#include "rbi/audit.hpp"
#include "rbi/cascade.hpp"
#include "rbi/error.hpp"
#include "rbi/protocol.hpp"
#include "rbi/synth.hpp"

namespace rbi::cli {
namespace {

struct ScanFlags {
  std::string cascade;
  std::uint64_t seed = 0;
  double scale_factor = 1.25;
  int step = 2;
  int min_neighbors = 3;
  bool normalize = false;

  DetectParams params() const {
    DetectParams p{scale_factor, step, min_neighbors, normalize};
    p.validate();
    return p;
  }
};

struct SecureFlags {
  std::string server;
  int k_fakes = 0;
  std::string stage_mode = "short";
  std::string backend = "mock";
  int key_bits = 1024;
  double latency_ms = 0;
  int jobs = 1;

  StageMode mode() const {
    if (stage_mode == "short" || stage_mode == "short_circuit") return StageMode::kShortCircuit;
    if (stage_mode == "constant" || stage_mode == "constant_stages") return StageMode::kConstantStages;
    throw UsageError("--stage-mode must be short or constant");
  }
  CompareBackend compare_backend() const {
    if (backend == "mock") return CompareBackend::kMock;
    if (backend == "paillier") return CompareBackend::kPaillier;
    throw UsageError("--backend must be mock or paillier");
  }
};

void add_scan_flags(CLI::App& app, ScanFlags& f) {
  app.add_option("--seed", f.seed, "Deterministic seed");
  app.add_option("--scale-factor", f.scale_factor, "Pyramid scale step")->capture_default_str();
  app.add_option("--step", f.step, "Window stride in pixels")->capture_default_str();
  app.add_option("--min-neighbors", f.min_neighbors, "Minimum cluster size, 0 disables grouping")
      ->capture_default_str();
  app.add_flag("--normalize", f.normalize, "Variance-normalize stump thresholds (plain only)");
}

void add_secure_flags(CLI::App& app, SecureFlags& f) {
  app.add_option("--server", f.server, "Server address host:port");
  app.add_option("--k-fakes", f.k_fakes, "Fake classifiers per stage (in-process server)");
  app.add_option("--stage-mode", f.stage_mode, "short or constant")->capture_default_str();
  app.add_option("--backend", f.backend, "Comparison backend: mock or paillier")->capture_default_str();
  app.add_option("--key-bits", f.key_bits, "Paillier modulus size")->capture_default_str();
  app.add_option("--latency-ms", f.latency_ms, "Injected delay per sent message");
  app.add_option("--jobs", f.jobs, "Parallel sessions")->capture_default_str();
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

// key=value lines; '#' and ';' start comments, [section] lines are ignored.
// Only options not given on the command line take the file's value.
void apply_config(CLI::App& cmd, const std::string& path) {
  if (path.empty()) return;
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find_first_of("#;")));
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front()) {
      value = value.substr(1, value.size() - 2);
    }
    auto* opt = key == "config" ? nullptr : cmd.get_option_no_throw("--" + key);
    if (opt == nullptr) throw UsageError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

std::shared_ptr<QuantizedCascade> load_quantized(const std::string& path) {
  if (path.empty()) throw UsageError("--cascade is required");
  return std::make_shared<QuantizedCascade>(quantize(load_cascade(path)));
}

// Everything one client session needs, owned together.
struct ClientLink {
  std::unique_ptr<BobSession> bob;
  std::unique_ptr<Channel> base;
  std::unique_ptr<Channel> delayed;
  std::unique_ptr<Channel> recorded;
  std::unique_ptr<AliceSession> alice;
};

std::vector<ClientLink> open_links(const ScanFlags& scan, const SecureFlags& sec,
                                   Transcript* transcript) {
  if (sec.jobs < 1) throw UsageError("--jobs must be >= 1");
  std::shared_ptr<QuantizedCascade> qc;
  if (sec.server.empty()) qc = load_quantized(scan.cascade);
  std::vector<ClientLink> links(static_cast<std::size_t>(sec.jobs));
  for (int j = 0; j < sec.jobs; ++j) {
    auto& l = links[static_cast<std::size_t>(j)];
    const std::string job = "-" + std::to_string(j);
    if (qc) {
      ServerConfig sc;
      sc.cascade = qc;
      sc.k_fakes = sec.k_fakes;
      sc.seed = derive_seed(scan.seed, "server" + job);
      l.bob = std::make_unique<BobSession>(sc);
      l.base = std::make_unique<LoopbackChannel>(*l.bob);
    } else {
      const auto [host, port] = split_host_port(sec.server);
      l.base = TcpChannel::connect(host, port);
    }
    Channel* ch = l.base.get();
    if (sec.latency_ms > 0) {
      l.delayed = std::make_unique<LatencyChannel>(
          *ch, std::chrono::microseconds(static_cast<long long>(sec.latency_ms * 1000)));
      ch = l.delayed.get();
    }
    if (transcript != nullptr) {
      l.recorded = std::make_unique<RecordingChannel>(*ch, *transcript);
      ch = l.recorded.get();
    }
    ClientConfig cc;
    cc.mode = sec.mode();
    cc.compare.backend = sec.compare_backend();
    cc.compare.key_bits = sec.key_bits;
    cc.seed = derive_seed(scan.seed, "client" + job);
    cc.secrets = transcript;
    l.alice = std::make_unique<AliceSession>(*ch, cc);
  }
  return links;
}

int cmd_detect(const std::string& mode, const std::string& image, const ScanFlags& scan,
               const SecureFlags& sec, const std::string& transcript_path, bool hashes_only,
               std::ostream& out, std::ostream& err) {
  const auto img = read_pnm(image);
  const auto params = scan.params();
  if (mode == "plain") {
    const auto qc = load_quantized(scan.cascade);
    out << format_detections(detect(img, *qc, params));
    return kExitOk;
  }
  if (mode != "secure") throw UsageError("--mode must be plain or secure");
  std::unique_ptr<Transcript> transcript;
  if (!transcript_path.empty()) transcript = std::make_unique<Transcript>(!hashes_only);
  auto links = open_links(scan, sec, transcript.get());
  std::vector<AliceSession*> sessions;
  for (auto& l : links) sessions.push_back(l.alice.get());
  const auto scan_result = alice_detect_secure(img, params, sessions);
  out << format_detections(scan_result.detections);
  if (transcript) transcript->save(transcript_path);
  std::uint64_t sent = 0;
  for (auto& l : links) sent += l.base->stats().bytes_sent + l.base->stats().bytes_received;
  err << "secure scan: " << scan_result.windows << " windows, " << scan_result.raw.size()
      << " raw hits, " << sent << " bytes exchanged\n";
  return kExitOk;
}

int cmd_serve(const std::string& cascade, const std::string& listen, int k_fakes, bool no_reshuffle,
              std::optional<std::uint64_t> seed, std::ostream& err) {
  ServerConfig sc;
  sc.cascade = load_quantized(cascade);
  sc.k_fakes = k_fakes;
  sc.reshuffle = !no_reshuffle;
  sc.seed = seed ? derive_seed(*seed, "serve") : system_seed();
  if (k_fakes < 0) throw UsageError("--k-fakes must be >= 0");
  const auto [host, port] = split_host_port(listen);

  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  TcpListener listener(host, port);
  std::mutex log_mu;
  err << "ready: serving " << sc.cascade->name << " on " << host << ":" << listener.port()
      << (sc.reshuffle ? "" : " (reshuffle off)") << std::endl;

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    listener.close();
  });
  serve(listener, sc, [&](std::uint64_t id, const ServerCounters& c, const ChannelStats& s,
                          const std::string& error) {
    std::lock_guard lock(log_mu);
    err << "session " << id << ": " << c.windows << " windows, " << c.stage_runs << " stage runs, "
        << c.comparisons << " comparisons, " << s.bytes_received << " bytes in, " << s.bytes_sent
        << " bytes out" << (error.empty() ? "" : ", error: " + error) << std::endl;
  });
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  err << "server stopped" << std::endl;
  return kExitOk;
}

std::vector<BenchMode> parse_modes(const std::vector<std::string>& names) {
  std::vector<BenchMode> modes;
  for (const auto& n : names) modes.push_back(parse_mode(n));
  return modes;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Blind Viola-Jones detection with random base images"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "rbi 0.1.0");

  ScanFlags scan;
  SecureFlags sec;

  auto* detect_cmd = app.add_subcommand("detect", "Detect objects in a PGM image");
  std::string mode = "plain";
  std::string image;
  std::string transcript_path;
  bool hashes_only = false;
  std::string detect_config;
  detect_cmd->add_option("--config", detect_config, "key=value defaults, overridden by flags");
  detect_cmd->add_option("--mode", mode, "plain or secure")->capture_default_str();
  detect_cmd->add_option("--image,image", image, "Input image (PGM P5 or PPM P6)")->required();
  detect_cmd->add_option("--cascade", scan.cascade, "OpenCV haar cascade XML");
  detect_cmd->add_option("--transcript", transcript_path, "Write the client transcript here");
  detect_cmd->add_flag("--hashes-only", hashes_only, "Transcript keeps payload hashes only");
  add_scan_flags(*detect_cmd, scan);
  add_secure_flags(*detect_cmd, sec);

  auto* serve_cmd = app.add_subcommand("serve", "Run the detection server");
  std::string listen = "127.0.0.1:7878";
  int serve_k = 0;
  bool no_reshuffle = false;
  std::optional<std::uint64_t> serve_seed;
  std::string serve_config;
  serve_cmd->add_option("--config", serve_config, "key=value defaults, overridden by flags");
  serve_cmd->add_option("--cascade", scan.cascade, "OpenCV haar cascade XML");
  serve_cmd->add_option("--listen", listen, "Bind address host:port")->capture_default_str();
  serve_cmd->add_option("--k-fakes", serve_k, "Fake classifiers per stage")->capture_default_str();
  serve_cmd->add_flag("--no-reshuffle", no_reshuffle,
                      "Reuse one obfuscation per stage for the whole session (test mode)");
  serve_cmd->add_option("--seed", serve_seed, "Deterministic server seed");

  auto* bench_cmd = app.add_subcommand("bench", "Time plain and secure scans");
  std::vector<std::string> images;
  std::vector<std::string> mode_names{"plain", "secure-mock"};
  int reps = 5;
  int synthetic = 1;
  int size = 100;
  std::vector<int> scaling_k;
  int scaling_windows = 40;
  std::string format = "text";
  std::string csv_out;
  std::string bench_config;
  bench_cmd->add_option("--config", bench_config, "key=value defaults, overridden by flags");
  bench_cmd->add_option("--cascade", scan.cascade, "OpenCV haar cascade XML");
  bench_cmd->add_option("--image", images, "Benchmark image(s); synthetic if omitted");
  bench_cmd->add_option("--synthetic", synthetic, "Synthetic images when no --image")->capture_default_str();
  bench_cmd->add_option("--size", size, "Synthetic image side length")->capture_default_str();
  bench_cmd->add_option("--modes", mode_names, "plain, secure-mock, secure-real")->delimiter(',');
  bench_cmd->add_option("--repetitions", reps, "Timed runs after one warm-up")->capture_default_str();
  bench_cmd->add_option("--scaling-k", scaling_k, "K values for the N+K scaling table")->delimiter(',');
  bench_cmd->add_option("--scaling-windows", scaling_windows, "Windows per scaling point")
      ->capture_default_str();
  bench_cmd->add_option("--format", format, "text or csv")->capture_default_str();
  bench_cmd->add_option("--csv-out", csv_out, "Also write the CSV report here");
  add_scan_flags(*bench_cmd, scan);
  add_secure_flags(*bench_cmd, sec);

  auto* audit_cmd = app.add_subcommand("audit", "Leakage report for a debug transcript");
  std::string audit_path;
  audit_cmd->add_option("--transcript,transcript", audit_path, "Transcript file")->required();

  auto* info_cmd = app.add_subcommand("cascade-info", "Summarize a cascade");
  bool dump = false;
  info_cmd->add_option("--cascade,cascade", scan.cascade, "OpenCV haar cascade XML")->required();
  info_cmd->add_flag("--dump", dump, "Print the canonical text dump");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*detect_cmd) apply_config(*detect_cmd, detect_config);
    if (*serve_cmd) apply_config(*serve_cmd, serve_config);
    if (*bench_cmd) apply_config(*bench_cmd, bench_config);
    if (*detect_cmd) {
      return cmd_detect(mode, image, scan, sec, transcript_path, hashes_only, out, err);
    }
    if (*serve_cmd) return cmd_serve(scan.cascade, listen, serve_k, no_reshuffle, serve_seed, err);
    if (*bench_cmd) {
      if (format != "text" && format != "csv") throw UsageError("--format must be text or csv");
      const auto qc = load_quantized(scan.cascade);
      BenchOptions o;
      o.modes = parse_modes(mode_names);
      o.repetitions = reps;
      o.params = scan.params();
      o.k_fakes = sec.k_fakes;
      o.stage_mode = sec.mode();
      o.key_bits = sec.key_bits;
      o.latency_ms = sec.latency_ms;
      o.seed = scan.seed;
      o.server = sec.server;
      Rng rng(derive_seed(scan.seed, "bench-images"));
      std::vector<GrayImage> imgs;
      for (const auto& p : images) imgs.push_back(read_pnm(p));
      if (imgs.empty()) {
        for (int i = 0; i < synthetic; ++i) imgs.push_back(random_image(size, size, rng));
      }
      std::vector<BenchRun> runs;
      for (const auto& img : imgs) {
        auto r = bench_image(img, *qc, o);
        runs.insert(runs.end(), r.begin(), r.end());
      }
      std::vector<ScalingPoint> scaling;
      if (!scaling_k.empty()) {
        std::vector<GrayImage> windows;
        for (int i = 0; i < scaling_windows; ++i) {
          windows.push_back(random_image(qc->window_width, qc->window_height, rng));
        }
        scaling = bench_scaling(windows, *qc, scaling_k, scan.seed);
      }
      out << format_report(runs, scaling, format == "csv");
      if (!csv_out.empty()) {
        std::ofstream f(csv_out);
        if (!f) throw Error("cannot write " + csv_out);
        f << format_report(runs, scaling, true);
      }
      return kExitOk;
    }
    if (*audit_cmd) {
      out << audit_transcript(Transcript::load(audit_path)).text();
      return kExitOk;
    }
    if (*info_cmd) {
      const auto c = load_cascade(scan.cascade);
      if (dump) {
        out << dump_cascade(c);
        return kExitOk;
      }
      const auto s = cascade_stats(c);
      out << "name: " << c.name << "\n";
      out << "window: " << s.window_width << "x" << s.window_height << "\n";
      out << "stages: " << s.stage_count << "\n";
      out << "weak classifiers: " << s.total_weak << " (max per stage " << s.max_weak << ")\n";
      out << "per stage:";
      for (const auto n : s.weak_per_stage) out << ' ' << n;
      out << "\n";
      out << "tilted features: " << (uses_tilted_features(c) ? "yes" : "no") << "\n";
      try {
        quantize(c);
        out << "quantization: ok\n";
      } catch (const Error& e) {
        out << "quantization: " << e.what() << "\n";
      }
      return kExitOk;
    }
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UnsupportedCascade& e) {
    err << "unsupported cascade: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CLI::Error& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace rbi::cli
