// neus: run pipeline stages, generate synthetic fixtures, rebuild reports.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "neus/pipeline.hpp"
#include "neus/synthetic.hpp"

namespace {

void print_artifact(const neus::pipeline::StageArtifact& a) {
    std::cout << a.stage << ": " << (a.cache_hit ? "cached" : "computed") << " key=" << a.key.substr(0, 16) << "\n";
    for (const auto& o : a.outputs) std::cout << "  " << o << "\n";
    for (const auto& w : a.warnings) std::cerr << "warning: " << a.stage << ": " << w << "\n";
}

int report_error(std::string_view kind, const std::string& message) {
    std::string flat = message;
    for (auto& ch : flat)
        if (ch == '\n' || ch == '\r') ch = ' ';
    std::cerr << "error: " << kind << ": " << flat << std::endl;
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"NEUS asset-pricing pipeline"};
    app.require_subcommand(1);

    std::string stage, config_path;
    auto* run = app.add_subcommand("run", "run one stage or all stages");
    run->add_option("stage", stage, "corpus|embed|project|cluster|select|evaluate|report|all")->required();
    run->add_option("--config", config_path, "pipeline config JSON")->required();

    std::string spec_path, synth_out;
    auto* synth = app.add_subcommand("synth", "write a synthetic fixture with planted structure");
    synth->add_option("--spec", spec_path, "synthetic spec JSON")->required();
    synth->add_option("--out", synth_out, "output directory")->required();

    std::string report_dir;
    double level = 0.05;
    auto* report = app.add_subcommand("report", "rebuild report tables from evaluation records");
    report->add_option("--out", report_dir, "pipeline output directory")->required();
    report->add_option("--level", level, "significance level")->check(CLI::Range(0.0, 1.0));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        report_error("usage_error", e.what());
        return 2;
    }

    try {
        if (*run) {
            neus::pipeline::Pipeline p(neus::pipeline::load_config(config_path));
            if (stage == "all") {
                for (const auto& a : p.run_all()) print_artifact(a);
            } else {
                const auto& names = neus::pipeline::stage_names();
                if (std::find(names.begin(), names.end(), stage) == names.end())
                    neus::fail(neus::ErrorKind::config, "unknown stage '" + stage + "'");
                print_artifact(p.run(stage));
            }
        } else if (*synth) {
            nlohmann::json spec;
            try {
                spec = nlohmann::json::parse(neus::csv::read_file(spec_path));
            } catch (const nlohmann::json::parse_error& e) {
                neus::fail(neus::ErrorKind::config, "cannot parse '" + spec_path + "': " + e.what());
            }
            const auto fx = neus::synthetic::generate(neus::synthetic::spec_from_json(spec));
            neus::synthetic::write_fixture(fx, synth_out);
            for (const auto& [name, _] : fx.files) std::cout << (std::filesystem::path(synth_out) / name).string() << "\n";
        } else if (*report) {
            for (const auto& f : neus::pipeline::report_from_directory(report_dir, level)) std::cout << f << "\n";
        }
    } catch (const neus::Error& e) {
        return report_error(neus::to_string(e.kind()), e.what());
    } catch (const std::bad_alloc&) {
        return report_error("resource_error", "out of memory");
    } catch (const std::exception& e) {
        return report_error("internal_error", e.what());
    }
    return 0;
}
