#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <set>

#include "clarify/error.hpp"
#include "clarify/eval/eval.hpp"
#include "clarify/kernels/dense.hpp"

namespace clarify::eval {

namespace {

ImageLoader loader_or_default(const RunOptions& options) {
    if (options.image_loader) return options.image_loader;
    return [](const std::string& path) { return gateway::ImageInput::from_file(path); };
}

}  // namespace

AccuracyReport eval_accuracy(const DatasetManifest& manifest, const DiagnoseFn& diagnose,
                             const RunOptions& options) {
    require(!manifest.entries.empty(), ErrorCode::InvalidArgument, "manifest is empty");
    require(static_cast<bool>(diagnose), ErrorCode::InvalidArgument, "diagnose function is required");
    const auto load = loader_or_default(options);
    const auto n = manifest.entries.size();

    std::vector<EntryOutcome> outcomes(n);
    std::vector<std::exception_ptr> errors(n);
    const int workers = options.workers > 0 ? options.workers : kernels::max_threads();
    const auto count = static_cast<long>(n);

#pragma omp parallel for schedule(dynamic) num_threads(workers)
    for (long k = 0; k < count; ++k) {
        const auto& e = manifest.entries[k];
        auto& o = outcomes[k];
        o.index = static_cast<std::size_t>(k);
        o.expected = e.class_name;
        try {
            std::optional<gateway::ImageInput> image;
            try {
                image = load(e.image);
            } catch (const Error& err) {
                if (err.code() != ErrorCode::NotFound) throw;
                o.skipped = true;
                o.note = err.what();
            }
            if (image) {
                o.predicted = diagnose(*image);
                o.correct = o.predicted == o.expected;
            }
        } catch (...) {
            errors[k] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    AccuracyReport r;
    std::string missing;
    for (const auto& o : outcomes) {
        if (!o.skipped) continue;
        ++r.skipped;
        missing += "\n  entry " + std::to_string(o.index + 1) + ": " + o.note;
    }
    if (r.skipped > 0 && !options.skip_missing)
        fail(ErrorCode::NotFound, std::to_string(r.skipped) + " image(s) missing:" + missing);

    std::set<std::string> labels;
    for (const auto& o : outcomes) {
        if (o.skipped) continue;
        labels.insert(o.expected);
        labels.insert(o.predicted);
    }
    r.classes.assign(labels.begin(), labels.end());
    r.confusion.assign(r.classes.size(), std::vector<std::size_t>(r.classes.size(), 0));
    auto col = [&](const std::string& c) {
        return static_cast<std::size_t>(std::lower_bound(r.classes.begin(), r.classes.end(), c) - r.classes.begin());
    };
    for (const auto& o : outcomes) {
        if (o.skipped) continue;
        ++r.evaluated;
        if (o.correct) ++r.correct;
        ++r.confusion[col(o.expected)][col(o.predicted)];
    }
    require(r.evaluated > 0, ErrorCode::InvalidArgument, "no manifest entry could be evaluated");
    r.accuracy_pct = 100.0 * static_cast<double>(r.correct) / static_cast<double>(r.evaluated);
    r.outcomes = std::move(outcomes);
    return r;
}

nlohmann::json AccuracyReport::to_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& o : outcomes) {
        nlohmann::json j{{"index", o.index}, {"expected", o.expected}, {"correct", o.correct}};
        if (o.skipped) {
            j["skipped"] = true;
            j["note"] = o.note;
        } else {
            j["predicted"] = o.predicted;
        }
        out.push_back(std::move(j));
    }
    return {{"accuracy_pct", accuracy_pct},
            {"correct", correct},
            {"evaluated", evaluated},
            {"skipped", skipped},
            {"classes", classes},
            {"confusion", confusion},
            {"entries", out}};
}

std::string AccuracyReport::to_table() const {
    char buf[128];
    std::snprintf(buf, sizeof buf, "accuracy: %.2f%% (%zu/%zu, %zu skipped)\n", accuracy_pct, correct,
                  evaluated, skipped);
    std::string s = buf;
    std::size_t width = 8;
    for (const auto& c : classes) width = std::max(width, c.size());
    s += "confusion (rows = true class):\n";
    for (std::size_t i = 0; i < classes.size(); ++i) {
        std::snprintf(buf, sizeof buf, "  %-*s", static_cast<int>(width), classes[i].c_str());
        s += buf;
        for (auto v : confusion[i]) {
            std::snprintf(buf, sizeof buf, " %4zu", v);
            s += buf;
        }
        s += "\n";
    }
    return s;
}

}  // namespace clarify::eval
