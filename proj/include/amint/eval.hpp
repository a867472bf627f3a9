#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "amint/data.hpp"
#include "amint/nets.hpp"

namespace amint {

enum class Method { ACTIVE, PASSIVE, MIA_LOSS, MIA_CONF };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct MetricRecord {
    Method method = Method::ACTIVE;
    std::string setup;  // entry|middle|output|n/a
    std::string dataset;
    uint64_t seed = 0;
    double mint_acc = 0.0;     // for attack records: the attack's balanced accuracy
    double audited_acc = 0.0;  // for attack records: accuracy of the attacked model
};

// Balanced accuracy of thresholding probabilities at 0.5 against binary
// membership labels. Requires both roles present.
double mint_accuracy_from_probs(const Tensor& probs, const std::vector<float>& labels);

// Membership probabilities for a batch of images, chunked to bound memory.
// The two-argument form runs the model's own head; the three-argument form
// runs a detached head on maps extracted from the given backbone.
Tensor mint_probs(EnhancedModel& model, const Tensor& images);
Tensor mint_probs(EnhancedModel& backbone, MintHead& head, const Tensor& images);

double mint_accuracy(EnhancedModel& model, const Tensor& images, const std::vector<float>& labels);
double mint_accuracy(EnhancedModel& backbone, MintHead& head, const Tensor& images,
                     const std::vector<float>& labels);

// Top-1 classification accuracy over the audited path.
double audited_accuracy(EnhancedModel& model, const Tensor& images, const std::vector<int>& labels);

struct CellStat {
    int seed_count = 0;
    double mint_mean = 0.0, mint_spread = 0.0;
    double audited_mean = 0.0, audited_spread = 0.0;
};

struct ExperimentReport {
    std::vector<MetricRecord> records;  // canonical order
    std::string setup_table;            // three-setup grid, active runs
    std::string method_table;           // active vs passive
    std::string attack_table;           // detection vs threshold attacks
    std::string footnotes;

    std::string full_text() const;
};

// Aggregates records into per-cell mean and spread (population standard
// deviation over seeds) and renders the three comparison tables. Rendering is
// a pure function of the record set; input order does not matter.
ExperimentReport build_report(std::vector<MetricRecord> records);

void write_results_csv(const std::filesystem::path& path, const std::vector<MetricRecord>& records);
std::vector<MetricRecord> read_results_csv(const std::filesystem::path& path);

}  // namespace amint
