#include "amint/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace amint {

namespace {

struct ScoredBatch {
    std::vector<int64_t> ids;
    std::vector<int> labels;
    std::vector<bool> membership;
};

ScoredBatch prepare_records(const Dataset& ds, const std::vector<SplitRecord>& records,
                            const char* who) {
    if (records.empty()) throw config_error(std::string(who) + ": no records to score");
    std::vector<SplitRecord> sorted = records;
    std::sort(sorted.begin(), sorted.end(),
              [](const SplitRecord& a, const SplitRecord& b) { return a.id < b.id; });
    ScoredBatch out;
    out.ids.reserve(sorted.size());
    for (const auto& r : sorted) {
        if (!out.ids.empty() && out.ids.back() == r.id)
            throw config_error(std::string(who) + ": duplicate sample_id " + std::to_string(r.id));
        if (r.id < 0 || r.id >= ds.count())
            throw config_error(std::string(who) + ": sample_id " + std::to_string(r.id) +
                               " outside the dataset");
        out.ids.push_back(r.id);
        out.membership.push_back(r.role == Role::MEMBER);
    }
    out.labels = gather_labels(ds, out.ids);
    return out;
}

// Row-wise log(sum(exp(logits))) in double, the stable way.
double row_logsumexp(const float* row, int classes) {
    double mx = row[0];
    for (int c = 1; c < classes; ++c) mx = std::max(mx, static_cast<double>(row[c]));
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) sum += std::exp(static_cast<double>(row[c]) - mx);
    return mx + std::log(sum);
}

template <typename ScoreFn>
std::vector<AttackScore> score_records(EnhancedModel& model, const Dataset& ds,
                                       const std::vector<SplitRecord>& records, const char* who,
                                       ScoreFn&& score_fn) {
    ScoredBatch batch = prepare_records(ds, records, who);
    std::vector<AttackScore> out(batch.ids.size());
    const int chunk = 128;
    int n = static_cast<int>(batch.ids.size());
    for (int i0 = 0; i0 < n; i0 += chunk) {
        int i1 = std::min(n, i0 + chunk);
        std::vector<int64_t> ids(batch.ids.begin() + i0, batch.ids.begin() + i1);
        Tensor logits = model.forward_audited(gather_images(ds, ids), false);
        int classes = logits.dim(1);
        for (int r = 0; r < i1 - i0; ++r) {
            size_t i = static_cast<size_t>(i0 + r);
            double score = score_fn(logits.data() + static_cast<size_t>(r) * classes, classes,
                                    batch.labels[i]);
            if (!std::isfinite(score))
                throw numeric_error(std::string(who) + ": non-finite score for sample_id " +
                                    std::to_string(batch.ids[i]));
            out[i] = {batch.ids[i], score, batch.membership[i]};
        }
    }
    return out;
}

double balanced_accuracy(const std::vector<AttackScore>& scores, double threshold,
                         const char* who) {
    int64_t pos = 0, neg = 0, tp = 0, tn = 0;
    for (const auto& s : scores) {
        bool pred = s.score > threshold;
        if (s.true_membership) {
            ++pos;
            if (pred) ++tp;
        } else {
            ++neg;
            if (!pred) ++tn;
        }
    }
    if (pos == 0 || neg == 0)
        throw config_error(std::string(who) + ": need both roles among the scores");
    return 0.5 * (static_cast<double>(tp) / static_cast<double>(pos) +
                  static_cast<double>(tn) / static_cast<double>(neg));
}

}  // namespace

std::vector<AttackScore> score_loss_attack(EnhancedModel& model, const Dataset& ds,
                                           const std::vector<SplitRecord>& records) {
    return score_records(model, ds, records, "score_loss_attack",
                         [](const float* row, int classes, int label) {
                             return static_cast<double>(row[label]) - row_logsumexp(row, classes);
                         });
}

std::vector<AttackScore> score_confidence_attack(EnhancedModel& model, const Dataset& ds,
                                                 const std::vector<SplitRecord>& records) {
    return score_records(model, ds, records, "score_confidence_attack",
                         [](const float* row, int classes, int) {
                             double mx = row[0];
                             for (int c = 1; c < classes; ++c)
                                 mx = std::max(mx, static_cast<double>(row[c]));
                             double sum = 0.0;
                             for (int c = 0; c < classes; ++c)
                                 sum += std::exp(static_cast<double>(row[c]) - mx);
                             return 1.0 / sum;
                         });
}

ThresholdRule calibrate_threshold(const std::vector<AttackScore>& calibration) {
    if (calibration.empty()) throw config_error("calibrate_threshold: no calibration scores");
    for (const auto& s : calibration)
        if (!std::isfinite(s.score)) throw config_error("calibrate_threshold: non-finite score");

    std::vector<AttackScore> sorted = calibration;
    std::sort(sorted.begin(), sorted.end(),
              [](const AttackScore& a, const AttackScore& b) { return a.score < b.score; });

    ThresholdRule rule;
    if (sorted.front().score == sorted.back().score) {
        // Single-valued scores carry no signal; any threshold is as good.
        rule.threshold = sorted.front().score;
        rule.calibration_accuracy = 0.5;
        rule.degenerate = true;
        balanced_accuracy(sorted, rule.threshold, "calibrate_threshold");  // role check
        return rule;
    }

    int64_t pos = 0, neg = 0;
    for (const auto& s : sorted)
        (s.true_membership ? pos : neg)++;
    if (pos == 0 || neg == 0)
        throw config_error("calibrate_threshold: need both roles among the scores");

    // Sweep thresholds from below the minimum upward. At each candidate the
    // predicted-member set is a suffix of the sorted order, so true-positive
    // and true-negative counts update incrementally.
    int64_t tp = pos, tn = 0;  // threshold below min: everything predicted member
    double best_acc = 0.5 * (static_cast<double>(tp) / pos + static_cast<double>(tn) / neg);
    double best_threshold = sorted.front().score - 1.0;
    size_t i = 0;
    while (i < sorted.size()) {
        size_t j = i;
        while (j < sorted.size() && sorted[j].score == sorted[i].score) {
            if (sorted[j].true_membership)
                --tp;
            else
                ++tn;
            ++j;
        }
        if (j == sorted.size()) break;  // everything below: accuracy 0.5, never better
        double threshold = sorted[i].score + 0.5 * (sorted[j].score - sorted[i].score);
        double acc = 0.5 * (static_cast<double>(tp) / pos + static_cast<double>(tn) / neg);
        if (acc > best_acc) {
            best_acc = acc;
            best_threshold = threshold;
        }
        i = j;
    }
    rule.threshold = best_threshold;
    rule.calibration_accuracy = best_acc;
    return rule;
}

double evaluate_attack(const ThresholdRule& rule, const std::vector<AttackScore>& eval_scores) {
    if (eval_scores.empty()) throw config_error("evaluate_attack: empty evaluation set");
    return balanced_accuracy(eval_scores, rule.threshold, "evaluate_attack");
}

AttackOutcome run_threshold_attack(const std::vector<AttackScore>& fit_scores,
                                   const std::vector<AttackScore>& eval_scores) {
    std::unordered_set<int64_t> fit_ids;
    for (const auto& s : fit_scores) fit_ids.insert(s.sample_id);
    for (const auto& s : eval_scores)
        if (fit_ids.count(s.sample_id))
            throw config_error("run_threshold_attack: sample_id " + std::to_string(s.sample_id) +
                               " appears in both calibration and evaluation scores");
    AttackOutcome outcome;
    outcome.rule = calibrate_threshold(fit_scores);
    outcome.eval_accuracy = evaluate_attack(outcome.rule, eval_scores);
    return outcome;
}

static const char* kScoresHeader = "sample_id,score,true_membership";

void write_scores_csv(const std::filesystem::path& path, const std::vector<AttackScore>& scores) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open scores file for writing: " + path.string());
    out << kScoresHeader << "\n";
    for (const auto& s : scores) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%lld,%.17g,%d\n", static_cast<long long>(s.sample_id),
                      s.score, s.true_membership ? 1 : 0);
        out << buf;
    }
    if (!out) throw data_error("failed writing scores file: " + path.string());
}

std::vector<AttackScore> read_scores_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open scores file: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kScoresHeader)
        throw data_error("scores file " + path.string() + ": bad header (expected \"" +
                         kScoresHeader + "\")");
    std::vector<AttackScore> scores;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 3)
            throw data_error("scores file " + path.string() + " line " + std::to_string(lineno) +
                             ": expected 3 fields");
        AttackScore s;
        try {
            s.sample_id = std::stoll(fields[0]);
            s.score = std::stod(fields[1]);
        } catch (const std::exception&) {
            throw data_error("scores file " + path.string() + " line " + std::to_string(lineno) +
                             ": unparsable numeric field");
        }
        if (fields[2] == "1")
            s.true_membership = true;
        else if (fields[2] == "0")
            s.true_membership = false;
        else
            throw data_error("scores file " + path.string() + " line " + std::to_string(lineno) +
                             ": true_membership must be 0 or 1");
        if (!std::isfinite(s.score))
            throw data_error("scores file " + path.string() + " line " + std::to_string(lineno) +
                             ": non-finite score");
        scores.push_back(s);
    }
    return scores;
}

}  // namespace amint
