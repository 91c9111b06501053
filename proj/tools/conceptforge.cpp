// conceptforge command-line tool: train, render, mix, evolve, eval, serve.
//
// Exit codes: 0 ok, 1 I/O or other failure, 2 bad config or arguments, 3 backend failure, 4 numeric failure.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "conceptforge.hpp"
#include "conceptforge/backend_factory.hpp"
#include "conceptforge/http_backend.hpp"

namespace fs = std::filesystem;
using namespace conceptforge;
using nlohmann::json;

namespace {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfig = 2, kBackend = 3, kNumeric = 4 };

struct Globals {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string backend;
    bool quiet = false;
};

std::mutex log_mutex;

void log(const Globals& g, const std::string& msg) {
    if (g.quiet) return;
    std::lock_guard lock(log_mutex);
    std::cerr << msg << "\n";
}

void require_writable(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    const auto probe = dir / ".write-test";
    std::ofstream f(probe);
    if (ec || !f) throw StoreError("output directory '" + dir.string() + "' is not writable");
    f.close();
    fs::remove(probe, ec);
}

// Config resolution: --config, else config.json next to (or one level above) the artifact.
RunConfig load_config(const Globals& g, const std::optional<fs::path>& artifact_dir = std::nullopt) {
    RunConfig c;
    if (!g.config.empty()) {
        c = parse_config(g.config);
    } else if (artifact_dir && fs::exists(*artifact_dir / "config.json")) {
        c = parse_config(*artifact_dir / "config.json");
    } else if (artifact_dir && fs::exists(artifact_dir->parent_path() / "config.json")) {
        c = parse_config(artifact_dir->parent_path() / "config.json");
    } else {
        throw ConfigError("no --config given and no config.json found");
    }
    apply_environment(c);
    if (!g.backend.empty()) c.backend.kind = parse_backend_kind(g.backend);
    if (g.seed) c.training.seed = *g.seed;
    return c;
}

fs::path out_dir(const Globals& g, const fs::path& fallback) { return g.out.empty() ? fallback : fs::path(g.out); }

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (auto w = normalize_word(item); !w.empty()) out.push_back(w);
    return out;
}

void write_images(const fs::path& dir, const std::vector<GeneratedImage>& images) {
    fs::create_directories(dir);
    for (const auto& img : images) write_png(dir / image_filename(img.seed, img.prompt), img);
}

std::vector<GeneratedImage> read_images(const fs::path& dir) {
    std::vector<GeneratedImage> out;
    for (const auto& p : list_png_files(dir)) out.push_back(read_png(p));
    if (out.empty()) throw StoreError("no PNG images in '" + dir.string() + "'");
    return out;
}

// ---- train ----

struct TrainArgs {
    std::size_t parallel_seeds = 1;
    std::optional<std::size_t> steps;
    std::string vqa_answers;
};

void train_one(const Globals& g, const RunConfig& config, const Backends& b, const fs::path& dir) {
    require_writable(dir);
    std::ofstream(dir / "config.json") << serialize_config(config) << "\n";

    RunSpec spec;
    spec.category = config.category;
    spec.positives = config.positives;
    spec.initial_negatives = config.negatives;
    spec.token_name = config.token_name;
    spec.id = dir.filename().string();
    spec.adaptive.question_template = config.question_template;
    spec.adaptive.render_template = config.render_template;
    spec.adaptive.image_dir = dir / "segments";
    spec.log = [&g, id = spec.id](const std::string& m) { log(g, "[" + id + "] " + m); };

    const auto t0 = std::chrono::steady_clock::now();
    const auto art = run(b, config.training, spec, config.template_bank());
    save_artifact(art, dir);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream msg;
    msg << "[" + spec.id + "] " << art.losses.size() << " steps in " << secs << " s, final loss " << art.losses.back()
        << ", negatives:";
    for (const auto& n : art.final_negatives) msg << ' ' << n;
    log(g, msg.str());
}

int cmd_train(const Globals& g, const TrainArgs& a) {
    RunConfig config = load_config(g);
    if (a.steps) config.training.total_steps = *a.steps;
    config.training.validate();
    const fs::path root = out_dir(g, "runs/" + slugify(config.category));
    require_writable(root);

    Backends b = make_backends(config);
    if (!a.vqa_answers.empty()) {
        if (config.backend.kind != BackendKind::stub) throw ConfigError("--vqa-answers only applies to the stub backend");
        b.vqa = std::make_shared<ScriptedVqa>(split_list(a.vqa_answers));
    }
    if (a.parallel_seeds <= 1) {
        train_one(g, config, b, root);
        return kOk;
    }
    // Independent seeded runs sharing read-only backends. A scripted VQA replays a single sequence,
    // so each run gets its own copy.
    parallel_for(a.parallel_seeds, a.parallel_seeds, [&](std::size_t i) {
        RunConfig c = config;
        c.training.seed = config.training.seed + i;
        Backends local = b;
        if (!a.vqa_answers.empty()) local.vqa = std::make_shared<ScriptedVqa>(split_list(a.vqa_answers));
        train_one(g, c, local, root / ("seed_" + std::to_string(c.training.seed)));
    });
    return kOk;
}

// ---- render ----

struct RenderArgs {
    std::string artifact;
    std::string prompt_template;
    std::optional<std::size_t> n;
};

int cmd_render(const Globals& g, const RenderArgs& a) {
    const fs::path dir = a.artifact;
    const RunConfig config = load_config(g, dir);
    const auto art = load_artifact(dir);
    const std::string tmpl = a.prompt_template.empty() ? config.render.prompt_template : a.prompt_template;
    const std::size_t n = a.n.value_or(config.render.images);
    const fs::path out = out_dir(g, dir / "renders");
    require_writable(out);
    const Backends b = make_backends(config);
    const auto images = render(b, art.token, tmpl, n, g.seed.value_or(0));
    write_images(out, images);
    log(g, "wrote " + std::to_string(images.size()) + " images to " + out.string());
    return kOk;
}

// ---- mix ----

struct MixArgs {
    std::vector<std::string> parents;
    std::vector<std::string> parent_images;
    std::vector<double> weights;
    std::string id = "mix";
    std::optional<std::size_t> steps;
};

int cmd_mix(const Globals& g, const MixArgs& a) {
    if (a.parents.empty() && a.parent_images.empty()) throw ConfigError("mix: give at least one --parent or --parent-images");
    RunConfig config = load_config(g, a.parents.empty() ? std::nullopt : std::optional<fs::path>(a.parents.front()));
    if (a.steps) config.training.total_steps = *a.steps;
    const fs::path out = out_dir(g, "runs/" + slugify(a.id));
    require_writable(out);

    MixSpec spec;
    spec.images_per_parent = config.images_per_parent;
    spec.render_template = config.render_template;
    for (const auto& p : a.parents) {
        auto art = load_artifact(p);
        spec.parents.push_back({art.id.empty() ? fs::path(p).filename().string() : art.id, std::move(art), {}});
    }
    for (const auto& p : a.parent_images) spec.parents.push_back({fs::path(p).filename().string(), std::nullopt, read_images(p)});
    if (!a.weights.empty()) spec.weights = a.weights;
    spec.validate();

    const Backends b = make_backends(config);
    std::ofstream(out / "config.json") << serialize_config(config) << "\n";
    const auto art = mix_concepts(b, spec, config.training, config.template_bank(), a.id);
    save_artifact(art, out);
    write_images(out / "renders", render(b, art.token, config.render.prompt_template, config.images_per_parent, 0));
    log(g, "mixed " + std::to_string(spec.parents.size()) + " parents into " + out.string());
    return kOk;
}

// ---- evolve ----
//
// Plan file:
// { "roots": [{"id": "a", "artifact": "runs/a"}, {"id": "b", "images": "photos/b"}],
//   "generations": [[{"parents": ["a", "b"], "weights": [0.5, 0.5], "id": "ab"}], ...] }

struct EvolveArgs {
    std::string plan;
    std::size_t threads = 1;
    std::optional<std::size_t> steps;
};

int cmd_evolve(const Globals& g, const EvolveArgs& a) {
    std::ifstream in(a.plan);
    if (!in) throw ConfigError("cannot open plan '" + a.plan + "'");
    json plan;
    try {
        plan = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError("plan '" + a.plan + "' is not valid JSON: " + e.what());
    }
    const fs::path base = fs::path(a.plan).parent_path();
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

    EvolutionTree tree;
    std::optional<fs::path> first_artifact;
    std::vector<std::vector<Pairing>> generations;
    try {
        for (const auto& r : plan.at("roots")) {
            EvolutionNode node;
            node.id = r.at("id").get<std::string>();
            if (r.contains("artifact")) {
                node.artifact_path = resolve(r.at("artifact").get<std::string>()).string();
                node.learned = load_artifact(node.artifact_path);
                if (!first_artifact) first_artifact = node.artifact_path;
            } else if (r.contains("images")) {
                node.images_path = resolve(r.at("images").get<std::string>()).string();
                node.images = read_images(node.images_path);
            } else {
                throw ConfigError("plan: root '" + node.id + "' needs \"artifact\" or \"images\"");
            }
            tree.add_root(std::move(node));
        }
        for (const auto& gen : plan.at("generations")) {
            std::vector<Pairing> pairings;
            for (const auto& p : gen) {
                Pairing pr;
                pr.parents = p.at("parents").get<std::vector<std::string>>();
                if (p.contains("weights")) pr.weights = p.at("weights").get<std::vector<double>>();
                pr.child_id = p.value("id", "");
                pairings.push_back(std::move(pr));
            }
            generations.push_back(std::move(pairings));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("plan: ") + e.what());
    }

    RunConfig config = load_config(g, first_artifact);
    if (a.steps) config.training.total_steps = *a.steps;
    const fs::path out = out_dir(g, "runs/evolution");
    require_writable(out);
    std::ofstream(out / "config.json") << serialize_config(config) << "\n";

    const Backends b = make_backends(config);
    EvolveSettings settings{config.images_per_parent, config.render_template, a.threads};
    for (std::size_t gi = 0; gi < generations.size(); ++gi) {
        const auto ids = evolve_generation(b, tree, generations[gi], config.training, settings, config.template_bank());
        for (auto& node : tree.nodes()) {
            if (std::find(ids.begin(), ids.end(), node.id) == ids.end()) continue;
            const fs::path dir = out / slugify(node.id);
            save_artifact(*node.learned, dir);
            write_images(dir / "renders",
                         render(b, node.learned->token, config.render.prompt_template, config.images_per_parent, 0));
            node.artifact_path = dir.string();
            log(g, "generation " + std::to_string(node.generation) + ": " + node.id);
        }
    }
    std::ofstream(out / "tree.json") << tree.to_json().dump(2) << "\n";
    return kOk;
}

// ---- eval ----
//
// Manifest file: [{"method": "ours", "category": "pet", "id": "x", "artifact": "runs/x" | "images": "dir",
//                  "positive": "pet", "negatives": ["cat", "dog"]}, ...]

struct EvalArgs {
    std::vector<std::string> artifacts;
    std::string images;
    std::string manifest;
    std::string positive;
    std::string negatives;
    std::string method = "conceptforge";
    bool protocol = false;
    std::optional<std::size_t> steps;
    std::size_t threads = 1;
};

struct EvalItem {
    std::string method, category, id, positive;
    std::vector<std::string> negatives;
    std::optional<fs::path> artifact, images;
};

void write_eval_outputs(const fs::path& out, const EvalReport& report) {
    write_report_csv(out / "report.csv", report);
    const auto rows = aggregate(report);
    write_aggregate_csv(out / "aggregate.csv", rows);
    write_png(out / "scatter.png", scatter_plot(rows));
}

int cmd_eval(const Globals& g, const EvalArgs& a) {
    if (a.protocol) {
        RunConfig config = load_config(g);
        if (a.steps) config.training.total_steps = *a.steps;
        const fs::path out = out_dir(g, "runs/protocol");
        require_writable(out);
        const Backends b = make_backends(config);
        auto grid = default_protocol_grid();
        grid.images_per_concept = config.render.images;
        const auto result = run_protocol(b, grid, config.training, config.template_bank(), a.threads);
        write_eval_outputs(out, result.concepts);
        write_report_csv(out / "combinations.csv", result.combinations);
        log(g, "protocol: " + std::to_string(result.concepts.records.size()) + " concepts scored");
        return kOk;
    }

    std::vector<EvalItem> items;
    if (!a.manifest.empty()) {
        std::ifstream in(a.manifest);
        if (!in) throw ConfigError("cannot open manifest '" + a.manifest + "'");
        const fs::path base = fs::path(a.manifest).parent_path();
        try {
            const json m = json::parse(in, nullptr, true, true);
            for (const auto& e : m) {
                EvalItem it;
                it.method = e.value("method", a.method);
                it.category = e.at("category").get<std::string>();
                it.id = e.value("id", it.category);
                it.positive = e.value("positive", it.category);
                it.negatives = e.at("negatives").get<std::vector<std::string>>();
                if (e.contains("artifact")) it.artifact = base / e.at("artifact").get<std::string>();
                if (e.contains("images")) it.images = base / e.at("images").get<std::string>();
                if (!it.artifact && !it.images) throw ConfigError("manifest entry '" + it.id + "' needs artifact or images");
                items.push_back(std::move(it));
            }
        } catch (const json::exception& e) {
            throw ConfigError(std::string("manifest: ") + e.what());
        }
    }
    for (const auto& p : a.artifacts) {
        EvalItem it;
        it.method = a.method;
        it.artifact = p;
        items.push_back(std::move(it));
    }
    if (!a.images.empty()) {
        EvalItem it;
        it.method = a.method;
        it.images = a.images;
        it.id = fs::path(a.images).filename().string();
        items.push_back(std::move(it));
    }
    if (items.empty()) throw ConfigError("eval: give --artifact, --images, --manifest or --protocol");

    std::optional<fs::path> first;
    for (const auto& it : items)
        if (it.artifact) {
            first = *it.artifact;
            break;
        }
    const RunConfig config = load_config(g, first);
    const fs::path out = out_dir(g, first ? *first / "eval" : fs::path("eval"));
    require_writable(out);
    const Backends b = make_backends(config);

    EvalReport report;
    for (auto& it : items) {
        std::vector<GeneratedImage> images;
        if (it.artifact) {
            const auto art = load_artifact(*it.artifact);
            if (it.category.empty()) it.category = art.token.category;
            if (it.id.empty()) it.id = art.id.empty() ? it.artifact->filename().string() : art.id;
            if (it.positive.empty()) it.positive = art.positives.empty() ? art.token.category : art.positives.front();
            if (it.negatives.empty()) it.negatives = art.initial_negatives;
            images = render(b, art.token, std::string(kEvalTemplate), config.render.images, g.seed.value_or(0));
        } else {
            images = read_images(*it.images);
        }
        if (!a.positive.empty()) it.positive = normalize_word(a.positive);
        if (!a.negatives.empty()) it.negatives = split_list(a.negatives);
        if (it.category.empty()) it.category = it.positive;
        if (it.positive.empty()) throw ConfigError("eval: no positive word for '" + it.id + "' (use --positive)");
        if (it.negatives.empty()) throw ConfigError("eval: no negatives for '" + it.id + "' (use --negatives)");
        report.records.push_back(
            score_images(b, embed_images(b, images, a.threads), it.method, it.category, it.id, it.positive, it.negatives));
    }
    write_eval_outputs(out, report);
    for (const auto& r : report.records) {
        std::ostringstream line;
        line << r.concept_id << ": positive " << r.positive_similarity << ", negative distance " << r.negative_distance;
        log(g, line.str());
    }
    return kOk;
}

// ---- serve ----

int cmd_serve(const Globals& g, const std::string& host, int port) {
    const RunConfig config = load_config(g);
    if (config.backend.kind != BackendKind::stub) throw ConfigError("serve: only the stub backend can be served");
    BackendServer server(make_backends(config));
    log(g, "serving stub backends on " + host + ":" + std::to_string(port));
    server.run(host, port);
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"conceptforge: learn novel concepts under prior constraints"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand
    Globals g;
    app.add_option("--config", g.config, "run config (JSON)");
    app.add_option("--out", g.out, "output directory");
    app.add_option("--seed", g.seed, "seed override");
    app.add_option("--backend", g.backend, "backend kind")->check(CLI::IsMember({"stub", "real"}));
    app.add_flag("-q,--quiet", g.quiet, "no progress output");

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "learn a concept token");
    train->add_option("--parallel-seeds", ta.parallel_seeds, "independent seeded runs in parallel")->check(CLI::PositiveNumber);
    train->add_option("--steps", ta.steps, "override training.total_steps");
    train->add_option("--vqa-answers", ta.vqa_answers, "stub only: comma-separated scripted VQA answers");

    RenderArgs ra;
    auto* rend = app.add_subcommand("render", "generate images of a learned concept");
    rend->add_option("--artifact", ra.artifact, "artifact / run directory")->required();
    rend->add_option("--template", ra.prompt_template, "prompt template with one {}");
    rend->add_option("-n,--images", ra.n, "number of images");

    MixArgs ma;
    auto* mix = app.add_subcommand("mix", "mix parent concepts into a new token");
    mix->add_option("--parent", ma.parents, "parent artifact directory (repeatable)");
    mix->add_option("--parent-images", ma.parent_images, "directory of parent images (repeatable)");
    mix->add_option("--weights", ma.weights, "per-parent weights, summing to 1")->delimiter(',');
    mix->add_option("--id", ma.id, "child id");
    mix->add_option("--steps", ma.steps, "override training.total_steps");

    EvolveArgs va;
    auto* evolve = app.add_subcommand("evolve", "run an evolution plan");
    evolve->add_option("--plan", va.plan, "plan file (JSON)")->required();
    evolve->add_option("--threads", va.threads, "concurrent mixing runs")->check(CLI::PositiveNumber);
    evolve->add_option("--steps", va.steps, "override training.total_steps");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "score concepts by positive similarity and negative distance");
    eval->add_option("--artifact", ea.artifacts, "artifact directory (repeatable)");
    eval->add_option("--images", ea.images, "directory of PNG images");
    eval->add_option("--manifest", ea.manifest, "manifest file (JSON)");
    eval->add_option("--positive", ea.positive, "positive word");
    eval->add_option("--negatives", ea.negatives, "comma-separated negative words");
    eval->add_option("--method", ea.method, "method label for the report");
    eval->add_flag("--protocol", ea.protocol, "run the five-category protocol");
    eval->add_option("--steps", ea.steps, "protocol: override training.total_steps");
    eval->add_option("--threads", ea.threads, "worker threads")->check(CLI::PositiveNumber);

    std::string host = "127.0.0.1";
    int port = 8765;
    auto* serve = app.add_subcommand("serve", "serve stub backends over HTTP");
    serve->add_option("--host", host);
    serve->add_option("--port", port);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    try {
        if (*train) return cmd_train(g, ta);
        if (*rend) return cmd_render(g, ra);
        if (*mix) return cmd_mix(g, ma);
        if (*evolve) return cmd_evolve(g, va);
        if (*eval) return cmd_eval(g, ea);
        if (*serve) return cmd_serve(g, host, port);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kBackend;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kFailure;
}
