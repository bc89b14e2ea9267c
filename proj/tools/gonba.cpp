#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "httplib.h"

#include "gonba/gonba.hpp"
#include "gonba/service.hpp"

namespace {

using namespace gonba;

int serve(const RunConfig& cfg) {
  const Dfg dfg = pipeline::load_dfg(cfg);
  const PrefixModelBank bank = pipeline::load_bank(cfg);
  PolicyArtifact artifact = pipeline::load_artifact(cfg);
  RecommendService service(std::chrono::minutes(cfg.count("serve.idle_timeout_minutes")));
  service.load(std::move(artifact), dfg, bank);

  httplib::Server server;
  service.bind_http(server);
  const auto host = cfg.str("serve.host");
  int port = static_cast<int>(cfg.count("serve.port"));
  if (port == 0) {
    port = server.bind_to_any_port(host);
  } else if (!server.bind_to_port(host, port)) {
    throw UsageError("cannot bind " + host + ":" + std::to_string(port));
  }
  if (port < 0) throw UsageError("cannot bind " + host);
  std::cout << "listening on http://" << host << ":" << port << std::endl;
  server.listen_after_bind();
  return 0;
}

int synth(std::size_t traces, std::uint64_t seed, const std::string& path) {
  const EventLog log = synthetic::generate(synthetic::branching_process(), traces, seed);
  if (path == "-") {
    write_csv(log, std::cout);
  } else {
    pipeline::write_file(path, [&](std::ostream& o) { write_csv(log, o); });
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Goal-oriented next-best-activity recommendation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::string> config_path;
  std::vector<std::string> overrides;
  std::optional<std::string> seed, out_dir, log_path;
  app.add_option("-c,--config", config_path, "key = value config file");
  app.add_option("--set", overrides, "override a config key (key=value), repeatable");
  app.add_option("--seed", seed, "master seed (same as --set seed=N)");
  app.add_option("--out", out_dir, "output directory (same as --set out_dir=DIR)");
  app.add_option("--log", log_path, "event log CSV (same as --set log=PATH)");

  auto* discover = app.add_subcommand("discover", "discover the DFG and dataset statistics from the log");
  auto* train_kpi = app.add_subcommand("train-kpi", "train the per-prefix-length KPI model bank");
  auto* train_agent = app.add_subcommand("train-agent", "train a policy and write the artifact");
  std::optional<std::string> epochs, method;
  train_agent->add_option("--epochs", epochs, "passes over the training traces");
  train_agent->add_option("--method", method, "maskable-ppo | ppo-neg | dqn-neg");
  auto* evaluate = app.add_subcommand("evaluate", "greedy rollouts on the test split and the report");
  std::optional<std::string> episodes;
  evaluate->add_option("--episodes", episodes, "number of evaluation episodes");
  auto* recommend = app.add_subcommand("recommend", "ranked next activities for a prefix (JSON on stdout)");
  std::optional<std::string> prefix, top;
  recommend->add_option("--prefix", prefix, "activity[:kpi] list, e.g. A:0,B:1.5");
  recommend->add_option("--top", top, "number of candidates shown");
  auto* serve_cmd = app.add_subcommand("serve", "start the HTTP recommendation service");
  std::optional<std::string> host, port;
  serve_cmd->add_option("--host", host, "bind address");
  serve_cmd->add_option("--port", port, "bind port (0 picks a free port)");
  auto* schema = app.add_subcommand("config", "print every config key with its default");
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic 8-activity event log");
  std::size_t synth_traces = 500;
  std::uint64_t synth_seed = 1;
  std::string synth_out = "-";
  synth_cmd->add_option("--traces", synth_traces, "number of traces")->capture_default_str();
  synth_cmd->add_option("--seed", synth_seed, "generator seed")->capture_default_str();
  synth_cmd->add_option("-o,--output", synth_out, "output CSV ('-' for stdout)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (schema->parsed()) {
      for (const auto& k : config_schema())
        std::cout << k.name << " = " << k.default_value << (k.help.empty() ? "" : "  # " + k.help) << "\n";
      return 0;
    }
    if (synth_cmd->parsed()) return synth(synth_traces, synth_seed, synth_out);

    auto add = [&](const char* key, const std::optional<std::string>& v) {
      if (v) overrides.push_back(std::string(key) + "=" + *v);
    };
    add("seed", seed);
    add("out_dir", out_dir);
    add("log", log_path);
    add("agent.epochs", epochs);
    add("agent.method", method);
    add("eval.episodes", episodes);
    add("recommend.prefix", prefix);
    add("recommend.top", top);
    add("serve.host", host);
    add("serve.port", port);
    const RunConfig cfg = RunConfig::load(config_path, overrides);
    cfg.seed();

    if (discover->parsed()) pipeline::discover_cmd(cfg);
    if (train_kpi->parsed()) pipeline::train_kpi_cmd(cfg);
    if (train_agent->parsed()) pipeline::train_agent_cmd(cfg);
    if (evaluate->parsed()) pipeline::evaluate_cmd(cfg);
    if (recommend->parsed()) std::cout << pipeline::recommend_cmd(cfg).dump(2) << "\n";
    if (serve_cmd->parsed()) return serve(cfg);
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DivergenceError& e) {
    std::cerr << "error: training diverged: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
