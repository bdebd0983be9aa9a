// clarify: one binary for training, graph building, pruning analysis,
// serving and evaluation.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "clarify/error.hpp"
#include "clarify/eval/eval.hpp"
#include "clarify/gateway/stubs.hpp"
#include "clarify/kg/graph.hpp"
#include "clarify/pipeline/pipeline.hpp"
#include "clarify/pruning/pruning.hpp"
#include "clarify/specialist/io.hpp"
#include "clarify/specialist/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace clarify;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::RetryExhausted:
        case ErrorCode::ProtocolViolation:
        case ErrorCode::UpstreamError:
        case ErrorCode::Timeout:
        case ErrorCode::IoError:
        case ErrorCode::DivergedTraining:
        case ErrorCode::JudgeParseError:
            return kRuntime;
        default:
            return kValidation;
    }
}

void require_file(const std::string& path, const char* what) {
    require(fs::is_regular_file(path), ErrorCode::NotFound, std::string(what) + " not found: " + path);
}

json read_json_file(const std::string& path) {
    require_file(path, "file");
    std::ifstream in(path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::ConfigError, path + ": " + e.what());
    }
}

void emit(bool as_json, const json& j, const std::string& text) {
    if (as_json) {
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << text;
        if (!text.empty() && text.back() != '\n') std::cout << "\n";
    }
}

gateway::EndpointConfig endpoint_from(const std::string& url, const std::string& model, const char* env_var) {
    gateway::EndpointConfig cfg;
    cfg.base_url = url;
    cfg.model_name = model;
    return gateway::with_env_overrides(cfg, env_var);
}

std::shared_ptr<const gateway::TextEmbedder> text_embedder(const std::string& url, const std::string& model,
                                                           std::size_t stub_dim) {
    const auto cfg = endpoint_from(url, model, "CLARIFY_EMBED_URL");
    if (cfg.base_url.empty()) return std::make_shared<gateway::HashTextEmbedder>(stub_dim);
    return std::make_shared<gateway::HttpTextEmbedder>(cfg);
}

// ---------------------------------------------------------------------------

struct Globals {
    bool json = false;
};

struct SpecialistTrainArgs {
    std::string data, out, config;
    int epochs = 0;
    long long seed = -1;
};

int specialist_train(const Globals& g, const SpecialistTrainArgs& a) {
    require_file(a.data, "training data");
    auto cfg = a.config.empty() ? specialist::TrainingConfig{}
                                : specialist::TrainingConfig::from_json(read_json_file(a.config));
    if (a.epochs > 0) cfg.max_epochs = a.epochs;
    if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
    cfg.validate();
    const auto data = specialist::load_training_jsonl(a.data);
    const auto result = specialist::train(data, cfg);
    specialist::save_head(result.head, a.out);

    json hist = json::array();
    int switched = 0;
    for (const auto& e : result.history) {
        hist.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"train_accuracy", e.train_accuracy}, {"stage", e.stage}});
        if (e.stage_switched) switched = e.epoch;
    }
    const auto& last = result.history.back();
    char buf[200];
    std::snprintf(buf, sizeof buf, "trained %zu epochs, loss %.4f, train accuracy %.4f, stage switch at epoch %d -> %s",
                  result.history.size(), last.loss, last.train_accuracy, switched, a.out.c_str());
    emit(g.json,
         {{"out", a.out}, {"classes", result.head.class_names()}, {"stage_switch_epoch", switched},
          {"config", cfg.to_json()}, {"history", hist}},
         buf);
    return kOk;
}

struct SpecialistPredictArgs {
    std::string head, image, embed_url, embed_model;
};

int specialist_predict(const Globals& g, const SpecialistPredictArgs& a) {
    require_file(a.head, "head");
    require_file(a.image, "image");
    auto head = std::make_shared<const specialist::ClassifierHead>(specialist::load_head(a.head));
    const auto cfg = endpoint_from(a.embed_url, a.embed_model, "CLARIFY_BACKBONE_URL");
    std::shared_ptr<const gateway::ImageEmbedder> backbone;
    if (cfg.base_url.empty()) {
        backbone = std::make_shared<gateway::HashImageEmbedder>(head->input_dim());
    } else {
        backbone = std::make_shared<gateway::HttpImageEmbedder>(cfg);
    }
    const pipeline::LocalHeadDiagnoser d(backbone, head);
    const auto r = d.diagnose(gateway::ImageInput::from_file(a.image));
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s (confidence %.4f)", r.class_name.c_str(), r.confidence);
    emit(g.json, r.to_json(), buf);
    return kOk;
}

struct KgBuildArgs {
    std::string triples, out, embed_url, embed_model;
    std::size_t embed_dim = 384;
    bool strict = false;
};

int kg_build(const Globals& g, const KgBuildArgs& a) {
    require_file(a.triples, "triples file");
    const auto graph = kg::ingest_file(a.triples, {a.strict});
    std::fprintf(stderr, "%zu entities, %zu relations\n", graph.entities().size(), graph.relations().size());
    const auto embedder = text_embedder(a.embed_url, a.embed_model, a.embed_dim);
    const auto indexed = kg::build_index(graph, *embedder);
    kg::save_graph(indexed, a.out);
    emit(g.json,
         {{"out", a.out}, {"entities", indexed.entities().size()}, {"relations", indexed.relations().size()},
          {"embedder", indexed.index().embedder}, {"dim", indexed.index().dim}},
         "wrote " + a.out);
    return kOk;
}

struct KgQueryArgs {
    std::string graph, text, embed_url, embed_model;
    std::size_t top = 5;
};

int kg_query(const Globals& g, const KgQueryArgs& a) {
    require_file(a.graph, "graph");
    const auto graph = kg::load_graph(a.graph);
    require(graph.has_index(), ErrorCode::ConfigError, "graph " + a.graph + " has no embedding index");
    const auto embedder = text_embedder(a.embed_url, a.embed_model, graph.index().dim);
    const auto matches = kg::semantic_lookup(graph, *embedder, a.text, a.top);
    json out = json::array();
    std::string text;
    for (const auto& m : matches) {
        out.push_back({{"id", m.entity.id}, {"label", m.entity.label}, {"kind", kg::to_string(m.entity.kind)},
                       {"similarity", m.similarity}});
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6f  ", m.similarity);
        text += buf + m.entity.id + "  " + m.entity.label + "\n";
    }
    emit(g.json, out, text);
    return kOk;
}

struct KgContextArgs {
    std::string graph, entity;
    int hops = 2;
    std::size_t max_facts = 12;
};

int kg_context(const Globals& g, const KgContextArgs& a) {
    require_file(a.graph, "graph");
    const auto graph = kg::load_graph(a.graph);
    const auto pack = kg::neighborhood(graph, a.entity, a.hops, a.max_facts);
    emit(g.json, pipeline::context_to_json(pack), pack.rendered_text);
    return kOk;
}

struct PruneScoreArgs {
    std::string profile, calibration, out, strategy = "one_shot", model_url, embed_url, embed_model;
    int target = -1;
    bool toy = false;
    std::uint64_t toy_seed = 1;
    std::size_t embed_dim = 384;
};

int prune_score(const Globals& g, const PruneScoreArgs& a) {
    require_file(a.profile, "model profile");
    require_file(a.calibration, "calibration set");
    const auto profile = pruning::load_profile(a.profile);
    const auto cal = pruning::CalibrationSet::from_file(a.calibration);
    const auto strategy = pruning::strategy_from_string(a.strategy);

    std::unique_ptr<pruning::AblatableModel> model;
    if (a.toy) {
        auto toy = pruning::ToyLayeredModel::random(profile.layer_count, a.toy_seed);
        model = std::make_unique<pruning::ToyLayeredModel>(toy.layers(), profile.params_total,
                                                           profile.params_per_layer, profile.name + "(toy)");
    } else {
        auto cfg = endpoint_from(a.model_url, profile.name, "CLARIFY_CHAT_URL");
        require(!cfg.base_url.empty(), ErrorCode::InvalidArgument,
                "--model-url (or CLARIFY_CHAT_URL) is required unless --toy is given");
        model = std::make_unique<pruning::HttpAblatableModel>(cfg, profile.layer_count, profile.params_total,
                                                              profile.params_per_layer);
    }

    int target = a.target;
    if (target < 0) {
        target = 0;
        for (const auto& r : profile.reference) target = std::max(target, r.layers_removed);
    }
    const auto embedder = text_embedder(a.embed_url, a.embed_model, a.embed_dim);
    const auto constraints = pruning::PruningConstraints::defaults(model->layer_count());
    const auto plan =
        strategy == pruning::Strategy::OneShot
            ? pruning::make_plan(pruning::score_all_layers(*model, cal, constraints, *embedder), constraints, target,
                                 model->name())
            : pruning::make_greedy_plan(*model, cal, constraints, *embedder, target);
    pruning::export_plan(plan, a.out);

    std::string text = "layer  s_avg\n";
    for (const auto& s : plan.scores) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%5d  %+.6f\n", s.layer, s.s_avg);
        text += buf;
    }
    text += "removal order:";
    for (int l : plan.removal_order) text += " " + std::to_string(l);
    text += "\n" + pruning::format_report(pruning::compression_report(*model, plan)) + "\nwrote " + a.out;
    emit(g.json, pruning::plan_to_json(plan), text);
    return kOk;
}

struct PruneReportArgs {
    std::string plan, profile;
};

int prune_report(const Globals& g, const PruneReportArgs& a) {
    require_file(a.plan, "plan");
    require_file(a.profile, "model profile");
    const auto plan = pruning::import_plan(a.plan);
    const auto profile = pruning::load_profile(a.profile);
    const auto removed = plan.removal_order.size();
    require(static_cast<int>(removed) < profile.layer_count, ErrorCode::InvalidTarget,
            "plan removes more layers than the profile has");
    const auto r = pruning::compression_report(profile.params_total, profile.params_per_layer, removed);
    json j{{"model", profile.name},
           {"layers_removed", removed},
           {"params_per_layer", profile.params_per_layer},
           {"params_after", r.params_after},
           {"compression_pct", r.compression_pct},
           {"compression_pct_rounded", r.compression_pct_rounded},
           {"report", pruning::format_report(r)}};
    for (const auto& row : profile.reference) {
        if (row.layers_removed != static_cast<int>(removed)) continue;
        j["reference"] = {{"params_b", row.params_b}, {"compression_pct", row.compression_pct}};
    }
    emit(g.json, j, pruning::format_report(r));
    return kOk;
}

struct ServeArgs {
    std::string config, host, data_dir;
    int port = -1;
};

int serve(const Globals&, const ServeArgs& a) {
    require_file(a.config, "config");
    auto cfg = pipeline::ServiceConfig::load(a.config);
    if (!a.host.empty()) cfg.host = a.host;
    if (a.port >= 0) cfg.port = a.port;
    if (!a.data_dir.empty()) cfg.data_dir = a.data_dir;
    if (const char* key = std::getenv("CLARIFY_API_KEY"); key && *key) cfg.api_key = key;
    auto components = pipeline::build_components(cfg);
    auto store = std::make_shared<pipeline::SessionStore>(cfg.data_dir);
    auto p = std::make_shared<pipeline::Pipeline>(std::move(components), cfg.pipeline, store);
    pipeline::Service service(p, cfg.api_key);
    const int port = service.bind(cfg.host, cfg.port);
    std::fprintf(stderr, "listening on %s:%d\n", cfg.host.c_str(), port);
    service.run();
    return kOk;
}

struct EvalCommon {
    std::string manifest, config, images_dir;
    bool skip_missing = false;
    int workers = 0;
};

pipeline::ServiceConfig eval_service_config(const EvalCommon& a) {
    if (a.config.empty()) return pipeline::ServiceConfig{};
    require_file(a.config, "config");
    return pipeline::ServiceConfig::load(a.config);
}

eval::DatasetManifest eval_manifest(const EvalCommon& a) {
    require_file(a.manifest, "manifest");
    return eval::load_manifest(a.manifest);
}

struct EvalAccuracyArgs : EvalCommon {
    bool check_vocabulary = false;
};

int eval_accuracy(const Globals& g, const EvalAccuracyArgs& a) {
    const auto manifest = eval_manifest(a);
    if (a.check_vocabulary) eval::check_vocabulary(manifest, eval::paper_class_vocabulary());
    const auto components = pipeline::build_components(eval_service_config(a));
    const auto diagnoser = components.diagnoser;
    eval::RunOptions opts;
    opts.skip_missing = a.skip_missing;
    opts.workers = a.workers;
    const auto report = eval::eval_accuracy(
        manifest, [&](const gateway::ImageInput& img) { return diagnoser->diagnose(img).class_name; }, opts);
    emit(g.json, report.to_json(), report.to_table());
    return kOk;
}

struct EvalChatArgs : EvalCommon {
    std::vector<std::string> judge_urls, judge_models;
    std::string rubric;
};

int eval_chat(const Globals& g, const EvalChatArgs& a) {
    require(!a.judge_urls.empty(), ErrorCode::InvalidArgument, "at least one --judge-url is required");
    require(a.judge_models.empty() || a.judge_models.size() == a.judge_urls.size(), ErrorCode::InvalidArgument,
            "--judge-model must be given once per --judge-url");
    const auto manifest = eval_manifest(a);
    const auto rubric = a.rubric.empty() ? eval::default_rubric() : eval::load_rubric(a.rubric);
    const auto cfg = eval_service_config(a);

    std::vector<eval::Judge> judges;
    for (std::size_t i = 0; i < a.judge_urls.size(); ++i) {
        gateway::EndpointConfig jc;
        jc.base_url = a.judge_urls[i];
        jc.model_name = a.judge_models.empty() ? "judge-" + std::to_string(i + 1) : a.judge_models[i];
        if (const char* key = std::getenv("CLARIFY_API_KEY"); key && *key) jc.api_key = key;
        judges.push_back({jc.model_name, std::make_shared<gateway::HttpChatModel>(jc)});
    }

    auto store = std::make_shared<pipeline::SessionStore>();
    pipeline::Pipeline p(pipeline::build_components(cfg), cfg.pipeline, store, [](const json&) {});
    std::mutex mu;
    std::map<std::size_t, std::string> sessions;
    std::vector<pipeline::PipelineResponse> responses;
    auto answer = [&](std::size_t entry, const eval::ManifestEntry& e, const gateway::ImageInput& image,
                      std::size_t q) {
        pipeline::AskRequest req;
        req.query = e.qa[q].question;
        {
            std::lock_guard lock(mu);
            if (auto it = sessions.find(entry); it != sessions.end()) req.session_id = it->second;
        }
        if (!req.session_id) req.image = image;
        auto r = p.ask(req);
        std::lock_guard lock(mu);
        sessions[entry] = r.session_id;
        responses.push_back(r);
        return r.answer;
    };
    eval::RunOptions opts;
    opts.skip_missing = a.skip_missing;
    opts.workers = a.workers;
    const auto report = eval::eval_conversational(manifest, answer, judges, opts, rubric);
    const auto latency = eval::latency_report(responses);
    auto j = report.to_json();
    j["latency_ms"] = eval::latency_to_json(latency);
    std::string text = report.to_table();
    for (const auto& [stage, s] : latency) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "  latency %-12s mean %8.2f ms  p50 %8.2f  p95 %8.2f\n", stage.c_str(), s.mean,
                      s.p50, s.p95);
        text += buf;
    }
    emit(g.json, j, text);
    return kOk;
}

void add_eval_common(CLI::App* cmd, EvalCommon& a) {
    cmd->add_option("--manifest", a.manifest, "Manifest JSONL")->required();
    cmd->add_option("--config", a.config, "Service config JSON (specialist, generalist, graph)");
    cmd->add_flag("--skip-missing", a.skip_missing, "Drop entries whose image is missing");
    cmd->add_option("--workers", a.workers, "Concurrent entries (0 = default)")->check(CLI::NonNegativeNumber);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"clarify: specialist-guided dermatology assistant toolkit", "clarify"};
    app.require_subcommand(1);
    Globals g;
    app.add_flag("--json", g.json, "Machine-readable JSON on stdout");

    auto* spec = app.add_subcommand("specialist", "Train or run the classification head");
    spec->require_subcommand(1);
    SpecialistTrainArgs st;
    auto* spec_train = spec->add_subcommand("train", "Train a head on labelled embeddings");
    spec_train->add_option("--data", st.data, "JSONL of {embedding, label}")->required();
    spec_train->add_option("--out", st.out, "Output head file")->required();
    spec_train->add_option("--config", st.config, "TrainingConfig JSON");
    spec_train->add_option("--epochs", st.epochs, "Override max_epochs");
    spec_train->add_option("--seed", st.seed, "Override seed");
    SpecialistPredictArgs sp;
    auto* spec_predict = spec->add_subcommand("predict", "Classify one image");
    spec_predict->add_option("--head", sp.head, "Head file")->required();
    spec_predict->add_option("--image", sp.image, "Image file")->required();
    spec_predict->add_option("--embed-url", sp.embed_url, "Backbone base URL (default: offline hash backbone)");
    spec_predict->add_option("--embed-model", sp.embed_model, "Backbone model name");

    auto* kgc = app.add_subcommand("kg", "Build and query the knowledge graph");
    kgc->require_subcommand(1);
    KgBuildArgs kb;
    auto* kg_b = kgc->add_subcommand("build", "Ingest triples and build the embedding index");
    kg_b->add_option("--triples", kb.triples, "Triple JSONL")->required();
    kg_b->add_option("--out", kb.out, "Output graph file")->required();
    kg_b->add_flag("--strict", kb.strict, "Require every id to be declared with a label");
    kg_b->add_option("--embed-url", kb.embed_url, "Text embedder base URL (default: offline hash embedder)");
    kg_b->add_option("--embed-model", kb.embed_model, "Text embedder model name");
    kg_b->add_option("--embed-dim", kb.embed_dim, "Offline embedder dimension")->check(CLI::PositiveNumber);
    KgQueryArgs kq;
    auto* kg_q = kgc->add_subcommand("query", "Nearest entities to a text");
    kg_q->add_option("--graph", kq.graph, "Graph file")->required();
    kg_q->add_option("--text", kq.text, "Query text")->required();
    kg_q->add_option("--top", kq.top, "Number of matches")->check(CLI::PositiveNumber);
    kg_q->add_option("--embed-url", kq.embed_url, "Text embedder base URL");
    kg_q->add_option("--embed-model", kq.embed_model, "Text embedder model name");
    KgContextArgs kc;
    auto* kg_c = kgc->add_subcommand("context", "Facts around an entity");
    kg_c->add_option("--graph", kc.graph, "Graph file")->required();
    kg_c->add_option("--entity", kc.entity, "Anchor entity id")->required();
    kg_c->add_option("--hops", kc.hops, "Hop depth")->check(CLI::Range(1, 8));
    kg_c->add_option("--max-facts", kc.max_facts, "Fact limit")->check(CLI::PositiveNumber);

    auto* prune = app.add_subcommand("prune", "Layer importance and pruning plans");
    prune->require_subcommand(1);
    PruneScoreArgs ps;
    auto* prune_s = prune->add_subcommand("score", "Score layers and write a pruning plan");
    prune_s->add_option("--model-profile", ps.profile, "Model profile JSON")->required();
    prune_s->add_option("--calibration", ps.calibration, "Calibration prompts, one per line")->required();
    prune_s->add_option("--out", ps.out, "Output plan JSON")->required();
    prune_s->add_option("--strategy", ps.strategy, "one_shot | greedy_iterative")
        ->check(CLI::IsMember({"one_shot", "greedy_iterative"}));
    prune_s->add_option("--target", ps.target, "Layers to remove (default: largest reference row)");
    prune_s->add_flag("--toy", ps.toy, "Use a seeded toy model with the profile's layer count");
    prune_s->add_option("--toy-seed", ps.toy_seed, "Toy model seed");
    prune_s->add_option("--model-url", ps.model_url, "Ablatable generation server base URL");
    prune_s->add_option("--embed-url", ps.embed_url, "Sentence embedder base URL");
    prune_s->add_option("--embed-model", ps.embed_model, "Sentence embedder model name");
    prune_s->add_option("--embed-dim", ps.embed_dim, "Offline embedder dimension")->check(CLI::PositiveNumber);
    PruneReportArgs pr;
    auto* prune_r = prune->add_subcommand("report", "Parameter count after a plan");
    prune_r->add_option("--plan", pr.plan, "Plan JSON")->required();
    prune_r->add_option("--model-profile", pr.profile, "Model profile JSON")->required();

    ServeArgs sv;
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP pipeline service");
    serve_cmd->add_option("--config", sv.config, "Service config JSON")->required();
    serve_cmd->add_option("--host", sv.host, "Override bind host");
    serve_cmd->add_option("--port", sv.port, "Override bind port (0 = any free port)")->check(CLI::Range(0, 65535));
    serve_cmd->add_option("--data-dir", sv.data_dir, "Override session directory");

    auto* ev = app.add_subcommand("eval", "Evaluation harness");
    ev->require_subcommand(1);
    EvalAccuracyArgs ea;
    auto* ev_a = ev->add_subcommand("accuracy", "Specialist classification accuracy");
    add_eval_common(ev_a, ea);
    ev_a->add_flag("--check-vocabulary", ea.check_vocabulary, "Reject classes outside the eight reference classes");
    EvalChatArgs ec;
    auto* ev_c = ev->add_subcommand("chat", "Conversational quality via LLM judges");
    add_eval_common(ev_c, ec);
    ev_c->add_option("--judge-url", ec.judge_urls, "Judge chat endpoint base URL (repeatable)");
    ev_c->add_option("--judge-model", ec.judge_models, "Judge model name, one per --judge-url");
    ev_c->add_option("--rubric", ec.rubric, "Judge rubric JSON");

    // Lets --json appear after the subcommand as well.
    for (auto* group : app.get_subcommands({})) {
        group->fallthrough();
        for (auto* leaf : group->get_subcommands({})) leaf->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << "\n" << app.help();
        return kValidation;
    }

    try {
        if (spec_train->parsed()) return specialist_train(g, st);
        if (spec_predict->parsed()) return specialist_predict(g, sp);
        if (kg_b->parsed()) return kg_build(g, kb);
        if (kg_q->parsed()) return kg_query(g, kq);
        if (kg_c->parsed()) return kg_context(g, kc);
        if (prune_s->parsed()) return prune_score(g, ps);
        if (prune_r->parsed()) return prune_report(g, pr);
        if (serve_cmd->parsed()) return serve(g, sv);
        if (ev_a->parsed()) return eval_accuracy(g, ea);
        if (ev_c->parsed()) return eval_chat(g, ec);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kRuntime;
    }
    std::cerr << app.help();
    return kValidation;
}
