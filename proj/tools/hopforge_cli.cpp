// hopforge: command-line driver for ingest, run, evaluate and export.

#include <hopforge/error.hpp>
#include <hopforge/pipeline.hpp>
#include <hopforge/text.hpp>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace hopforge;

namespace {

struct Options {
    std::string config_path = "hopforge.json";
    std::string run_id;
    std::string seeds;
    std::string format;
    std::string mock_script;
    bool verbose = false;
};

std::vector<std::string> split_seeds(const std::string& list) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= list.size()) {
        const auto comma = list.find(',', start);
        const auto end = comma == std::string::npos ? list.size() : comma;
        auto item = text::collapse_whitespace(std::string_view(list).substr(start, end - start));
        if (!item.empty()) out.push_back(std::move(item));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

PipelineConfig load_config(const Options& o) {
    PipelineConfig c = PipelineConfig::from_file(o.config_path);
    if (!o.run_id.empty()) c.run_id = o.run_id;
    if (!o.seeds.empty()) c.seeds = split_seeds(o.seeds);
    if (!o.mock_script.empty()) c.mock_script = fs::absolute(o.mock_script).string();
    c.validate();
    return c;
}

int exit_code_for(const Error& e) {
    switch (e.code()) {
        case ErrorCode::Config:
        case ErrorCode::Usage: return 2;
        default: return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    Options o;
    std::string questions_file;
    std::string export_what;

    CLI::App app{"hopforge: multi-hop question generation over an encyclopedia corpus"};
    app.require_subcommand(1);
    app.add_flag("-v,--verbose", o.verbose, "Debug logging");

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "Pipeline config (JSON)");
        sub->add_option("--mock-script", o.mock_script, "Replay model calls from a mock script");
    };

    auto* ingest = app.add_subcommand("ingest", "Load the corpus into the store and report problems");
    add_common(ingest);

    auto* run = app.add_subcommand("run", "Run every stage for the configured seeds");
    add_common(run);
    run->add_option("--run-id", o.run_id, "Run directory name under runs_dir");
    run->add_option("--seeds", o.seeds, "Comma-separated seed titles (overrides the config)");

    auto* evaluate = app.add_subcommand("evaluate", "Quality-gate external questions");
    add_common(evaluate);
    evaluate->add_option("questions", questions_file, "Line-delimited {question, answer, candidates?}")->required();
    evaluate->add_option("--run-id", o.run_id, "Where reports are written");

    auto* exporter = app.add_subcommand("export", "Export graphs or the dataset of a finished run");
    add_common(exporter);
    exporter->add_option("what", export_what, "graph or dataset")->required();
    exporter->add_option("--run-id", o.run_id, "Run to export");
    exporter->add_option("--format", o.format, "json|dot for graphs, jsonl for the dataset");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    auto logger = spdlog::stderr_color_mt("hopforge");
    spdlog::set_default_logger(logger);
    spdlog::set_level(o.verbose ? spdlog::level::debug : spdlog::level::info);

    try {
        if (ingest->parsed()) {
            const auto report = ingest_corpus(load_config(o));
            std::cout << "pages: " << report.count << "\nerrors: " << report.errors.size()
                      << "\nduplicates: " << report.duplicates.size() << "\n";
            for (const auto& e : report.errors) std::cout << "  line " << e.line << ": " << e.message << "\n";
            for (const auto& d : report.duplicates) std::cout << "  line " << d.line << ": " << d.message << "\n";
            return 0;
        }
        if (run->parsed()) {
            const auto config = load_config(o);
            const auto manifest = run_pipeline(config);
            for (const auto& s : manifest.seeds) {
                std::cout << s.seed << ": " << s.outcome;
                if (!s.error.empty()) std::cout << " (" << s.error << ")";
                std::cout << "\n";
            }
            std::cout << "run " << manifest.run_id << ": " << manifest.accepted() << " accepted, " << manifest.failed()
                      << " failed, " << manifest.seeds.size() << " seeds -> " << config.run_dir().string() << "\n";
            return manifest.exit_code();
        }
        if (evaluate->parsed()) {
            const auto config = load_config(o);
            const auto records = evaluate_only(questions_file, config);
            int errors = 0;
            for (const auto& r : records) {
                if (r.report) {
                    std::cout << "line " << r.line << ": " << to_string(r.report->decision) << " (" << r.report->reason << ")\n";
                } else {
                    ++errors;
                    std::cout << "line " << r.line << ": error: " << r.error << "\n";
                }
            }
            std::cout << records.size() - static_cast<std::size_t>(errors) << " reports, " << errors << " errors -> "
                      << (config.run_dir() / "evaluate" / "reports.jsonl").string() << "\n";
            return 0;
        }
        if (exporter->parsed()) {
            const auto config = load_config(o);
            for (const auto& p : export_run(config, parse_export_kind(export_what), o.format)) {
                std::cout << p.string() << "\n";
            }
            return 0;
        }
    } catch (const Error& e) {
        spdlog::error("{}", e.what());
        return exit_code_for(e);
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
