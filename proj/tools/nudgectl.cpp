#include "nudge/analytics.hpp"
#include "nudge/error.hpp"
#include "nudge/events.hpp"
#include "nudge/log.hpp"
#include "nudge/prompt.hpp"
#include "nudge/server.hpp"
#include "nudge/simulator.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <pthread.h>

namespace {

int serve(const std::string& config_path, int port_override, bool verbose) {
    auto config = nudge::ServerConfig::load(config_path);
    if (port_override >= 0) {
        config.port = port_override;
    }
    nudge::log::set_level(verbose ? nudge::log::Level::Debug : nudge::log::Level::Info);

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    nudge::ApiServer server(config);
    const int port = server.start();
    std::cout << "listening on " << config.host << ":" << port << std::endl;
    int received = 0;
    sigwait(&signals, &received);
    std::cout << "shutting down" << std::endl;
    server.stop();
    return 0;
}

int report(const std::string& log_path, const std::string& format, const std::string& user) {
    nudge::EventLog log;
    for (const auto& e : nudge::read_jsonl(log_path)) {
        log.ingest(e);
    }
    auto records = log.records();
    if (!user.empty()) {
        std::erase_if(records, [&](const auto& r) { return r.user_id != user; });
    }
    const auto rep = nudge::build_report(records);
    if (format == "csv") {
        std::cout << rep.to_csv();
    } else {
        std::cout << rep.to_json().dump(2) << '\n';
    }
    return 0;
}

int simulate(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& mode,
             const std::string& out_dir) {
    auto config = nudge::sim::ScenarioConfig::load(config_path);
    if (seed) {
        config.seed = *seed;
    }
    if (!mode.empty()) {
        config.mode = nudge::intervention_mode_from_string(mode);
    }
    const auto result = nudge::sim::run_scenario(config);
    std::filesystem::create_directories(out_dir);
    nudge::write_jsonl(std::filesystem::path(out_dir) / "events.jsonl", result.events);
    auto report = result.report.to_json();
    report["scenario"] = config.to_json();
    std::ofstream(std::filesystem::path(out_dir) / "report.json") << report.dump(2) << '\n';
    std::cout << result.events.size() << " events, " << result.records.size() << " interventions -> " << out_dir
              << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"nudgectl: intervention server, reports and simulations"};
    app.require_subcommand(1);

    std::string config_path;
    int port = -1;
    bool verbose = false;
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API server");
    serve_cmd->add_option("--config", config_path, "Server configuration JSON")->required()->check(CLI::ExistingFile);
    serve_cmd->add_option("--port", port, "Override the configured port");
    serve_cmd->add_flag("-v,--verbose", verbose, "Debug logging");

    std::string log_path;
    std::string format = "json";
    std::string user;
    auto* report_cmd = app.add_subcommand("report", "Compute acceptance metrics from an event log");
    report_cmd->add_option("--log", log_path, "events.jsonl")->required()->check(CLI::ExistingFile);
    report_cmd->add_option("--out", format, "Output format")->check(CLI::IsMember({"csv", "json"}));
    report_cmd->add_option("--user", user, "Restrict to one user");

    std::string scenario_path;
    std::optional<std::uint64_t> seed;
    std::string mode;
    std::string out_dir;
    auto* sim_cmd = app.add_subcommand("simulate", "Run a synthetic-user scenario");
    sim_cmd->add_option("--config", scenario_path, "Scenario JSON")->required()->check(CLI::ExistingFile);
    sim_cmd->add_option("--seed", seed, "Override the scenario seed");
    sim_cmd->add_option("--mode", mode, "Override the mode")->check(CLI::IsMember({"Baseline", "Simple", "Full"}));
    sim_cmd->add_option("--out", out_dir, "Output directory")->required();

    std::string templates_dir;
    auto* tmpl_cmd = app.add_subcommand("templates", "Write the built-in prompt templates to a directory");
    tmpl_cmd->add_option("--out", templates_dir, "Output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*serve_cmd) {
            return serve(config_path, port, verbose);
        }
        if (*report_cmd) {
            return report(log_path, format, user);
        }
        if (*sim_cmd) {
            return simulate(scenario_path, seed, mode, out_dir);
        }
        if (*tmpl_cmd) {
            std::filesystem::create_directories(templates_dir);
            nudge::PromptTemplates::defaults().write_dir(templates_dir);
            return 0;
        }
    } catch (const nudge::Error& e) {
        std::cerr << "nudgectl: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "nudgectl: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
