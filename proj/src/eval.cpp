#include "amint/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

namespace amint {

std::string to_string(Method m) {
    switch (m) {
        case Method::ACTIVE: return "active";
        case Method::PASSIVE: return "passive";
        case Method::MIA_LOSS: return "mia_loss";
        case Method::MIA_CONF: return "mia_conf";
    }
    return "?";
}

Method method_from_string(const std::string& s) {
    if (s == "active") return Method::ACTIVE;
    if (s == "passive") return Method::PASSIVE;
    if (s == "mia_loss") return Method::MIA_LOSS;
    if (s == "mia_conf") return Method::MIA_CONF;
    throw config_error("unknown method: " + s + " (expected active|passive|mia_loss|mia_conf)");
}

double mint_accuracy_from_probs(const Tensor& probs, const std::vector<float>& labels) {
    if (probs.shape().size() != 1) throw dim_error("mint accuracy: probs must be a vector");
    if (probs.numel() != labels.size())
        throw dim_error("mint accuracy: probs and labels disagree on length");
    int64_t pos = 0, neg = 0, tp = 0, tn = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
        float l = labels[i];
        if (l != 0.0f && l != 1.0f) throw config_error("mint accuracy: labels must be 0 or 1");
        bool pred_member = probs[i] >= 0.5f;
        if (l == 1.0f) {
            ++pos;
            if (pred_member) ++tp;
        } else {
            ++neg;
            if (!pred_member) ++tn;
        }
    }
    if (pos == 0 || neg == 0)
        throw config_error("mint accuracy: need both roles present in the eval set");
    return 0.5 * (static_cast<double>(tp) / static_cast<double>(pos) +
                  static_cast<double>(tn) / static_cast<double>(neg));
}

static Tensor chunked_probs(EnhancedModel& model, MintHead* head, const Tensor& images) {
    if (images.shape().size() != 4) throw dim_error("mint_probs: images must be N x H x W x C");
    int n = images.dim(0);
    Tensor out({n});
    const int chunk = 128;
    for (int i0 = 0; i0 < n; i0 += chunk) {
        int i1 = std::min(n, i0 + chunk);
        std::vector<int> rows(static_cast<size_t>(i1 - i0));
        std::iota(rows.begin(), rows.end(), i0);
        Tensor part = gather_rows(images, rows);
        AADPair aad = model.extract_aad(part, false);
        Tensor p = head ? head->forward(aad, false) : model.forward_mint(aad, false);
        for (int i = i0; i < i1; ++i) out[static_cast<size_t>(i)] = p[static_cast<size_t>(i - i0)];
    }
    return out;
}

Tensor mint_probs(EnhancedModel& model, const Tensor& images) {
    return chunked_probs(model, nullptr, images);
}

Tensor mint_probs(EnhancedModel& backbone, MintHead& head, const Tensor& images) {
    return chunked_probs(backbone, &head, images);
}

double mint_accuracy(EnhancedModel& model, const Tensor& images, const std::vector<float>& labels) {
    return mint_accuracy_from_probs(mint_probs(model, images), labels);
}

double mint_accuracy(EnhancedModel& backbone, MintHead& head, const Tensor& images,
                     const std::vector<float>& labels) {
    return mint_accuracy_from_probs(mint_probs(backbone, head, images), labels);
}

double audited_accuracy(EnhancedModel& model, const Tensor& images, const std::vector<int>& labels) {
    if (images.shape().size() != 4) throw dim_error("audited_accuracy: images must be N x H x W x C");
    int n = images.dim(0);
    if (n != static_cast<int>(labels.size()))
        throw dim_error("audited_accuracy: images and labels disagree on count");
    if (n == 0) throw config_error("audited_accuracy: empty evaluation set");
    int64_t correct = 0;
    const int chunk = 128;
    for (int i0 = 0; i0 < n; i0 += chunk) {
        int i1 = std::min(n, i0 + chunk);
        std::vector<int> rows(static_cast<size_t>(i1 - i0));
        std::iota(rows.begin(), rows.end(), i0);
        Tensor part = gather_rows(images, rows);
        Tensor logits = model.forward_audited(part, false);
        int classes = logits.dim(1);
        for (int r = 0; r < i1 - i0; ++r) {
            const float* row = logits.data() + static_cast<size_t>(r) * classes;
            int best = 0;
            for (int c = 1; c < classes; ++c)
                if (row[c] > row[best]) best = c;
            if (best == labels[static_cast<size_t>(i0 + r)]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

namespace {

int method_rank(Method m) {
    switch (m) {
        case Method::ACTIVE: return 0;
        case Method::PASSIVE: return 1;
        case Method::MIA_LOSS: return 2;
        case Method::MIA_CONF: return 3;
    }
    return 4;
}

int setup_rank(const std::string& s) {
    if (s == "entry") return 0;
    if (s == "middle") return 1;
    if (s == "output") return 2;
    if (s == "n/a") return 3;
    return 4;
}

size_t display_width(const std::string& s) {
    size_t w = 0;
    for (unsigned char c : s)
        if ((c & 0xC0) != 0x80) ++w;
    return w;
}

std::string pad(const std::string& s, size_t w) {
    std::string out = s;
    for (size_t dw = display_width(s); dw < w; ++dw) out += ' ';
    return out;
}

std::string fmt4(double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.4f", v);
    return b;
}

using CellKey = std::tuple<std::string, Method, std::string>;  // dataset, method, setup

std::string cell_text(const std::map<CellKey, CellStat>& cells, const CellKey& key, bool mint_col) {
    auto it = cells.find(key);
    if (it == cells.end()) return "—";
    const CellStat& st = it->second;
    double mean = mint_col ? st.mint_mean : st.audited_mean;
    double spread = mint_col ? st.mint_spread : st.audited_spread;
    return fmt4(mean) + " ± " + fmt4(spread);
}

int cell_seeds(const std::map<CellKey, CellStat>& cells, const CellKey& key) {
    auto it = cells.find(key);
    return it == cells.end() ? 0 : it->second.seed_count;
}

}  // namespace

std::string ExperimentReport::full_text() const {
    return setup_table + "\n" + method_table + "\n" + attack_table + "\n" + footnotes;
}

ExperimentReport build_report(std::vector<MetricRecord> records) {
    if (records.empty()) throw config_error("build_report: no records");
    for (const auto& r : records) {
        if (r.mint_acc < 0.0 || r.mint_acc > 1.0 || r.audited_acc < 0.0 || r.audited_acc > 1.0)
            throw config_error("build_report: accuracies must lie in [0,1]");
        if (r.setup.empty() || r.dataset.empty())
            throw config_error("build_report: setup and dataset must be nonempty");
    }
    std::sort(records.begin(), records.end(), [](const MetricRecord& a, const MetricRecord& b) {
        return std::tuple(a.dataset, method_rank(a.method), setup_rank(a.setup), a.setup, a.seed) <
               std::tuple(b.dataset, method_rank(b.method), setup_rank(b.setup), b.setup, b.seed);
    });

    std::map<CellKey, std::vector<std::pair<double, double>>> grouped;
    std::vector<std::string> datasets;
    for (const auto& r : records) {
        grouped[{r.dataset, r.method, r.setup}].push_back({r.mint_acc, r.audited_acc});
        if (datasets.empty() || datasets.back() != r.dataset) {
            if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end())
                datasets.push_back(r.dataset);
        }
    }
    std::sort(datasets.begin(), datasets.end());

    std::map<CellKey, CellStat> cells;
    for (const auto& [key, vals] : grouped) {
        CellStat st;
        st.seed_count = static_cast<int>(vals.size());
        double n = static_cast<double>(vals.size());
        for (auto [m, a] : vals) {
            st.mint_mean += m / n;
            st.audited_mean += a / n;
        }
        for (auto [m, a] : vals) {
            st.mint_spread += (m - st.mint_mean) * (m - st.mint_mean) / n;
            st.audited_spread += (a - st.audited_mean) * (a - st.audited_mean) / n;
        }
        st.mint_spread = std::sqrt(st.mint_spread);
        st.audited_spread = std::sqrt(st.audited_spread);
        cells[key] = st;
    }

    size_t dsw = display_width("dataset");
    for (const auto& ds : datasets) dsw = std::max(dsw, display_width(ds));
    const size_t cw = 15;  // "0.1234 ± 0.5678"

    ExperimentReport report;
    report.records = std::move(records);

    {
        std::string t = "three-setup comparison (active)\n";
        t += pad("dataset", dsw) + "  " + pad("setup", 6) + "  " + pad("mint_acc", cw) + "  " +
             pad("audited_acc", cw) + "  seeds\n";
        for (const auto& ds : datasets) {
            for (const char* setup : {"entry", "middle", "output"}) {
                CellKey key{ds, Method::ACTIVE, setup};
                t += pad(ds, dsw) + "  " + pad(setup, 6) + "  " +
                     pad(cell_text(cells, key, true), cw) + "  " +
                     pad(cell_text(cells, key, false), cw) + "  " +
                     std::to_string(cell_seeds(cells, key)) + "\n";
            }
        }
        for (const auto& ds : datasets) {
            auto entry = cells.find({ds, Method::ACTIVE, "entry"});
            auto output = cells.find({ds, Method::ACTIVE, "output"});
            t += "entry-vs-output audited check (" + ds + "): ";
            if (entry == cells.end() || output == cells.end()) {
                t += "[INCOMPLETE]\n";
            } else {
                double e = entry->second.audited_mean, o = output->second.audited_mean;
                t += "entry " + fmt4(e) + " vs output " + fmt4(o) +
                     (e >= o ? " [PASS]\n" : " [FAIL]\n");
            }
        }
        report.setup_table = t;
    }

    auto method_block = [&](const char* title, const std::vector<Method>& methods) {
        std::string t = std::string(title) + "\n";
        std::vector<std::tuple<std::string, std::string, CellKey>> rows;  // dataset, label, key
        size_t mw = display_width("method");
        for (const auto& ds : datasets) {
            for (Method m : methods) {
                for (const auto& [key, st] : cells) {
                    if (std::get<0>(key) != ds || std::get<1>(key) != m) continue;
                    std::string label = to_string(m);
                    if (m == Method::ACTIVE || m == Method::PASSIVE)
                        label += "(" + std::get<2>(key) + ")";
                    mw = std::max(mw, display_width(label));
                    rows.push_back({ds, label, key});
                }
            }
        }
        t += pad("dataset", dsw) + "  " + pad("method", mw) + "  " + pad("mint_acc", cw) + "  " +
             pad("audited_acc", cw) + "  seeds\n";
        for (const auto& [ds, label, key] : rows) {
            t += pad(ds, dsw) + "  " + pad(label, mw) + "  " + pad(cell_text(cells, key, true), cw) +
                 "  " + pad(cell_text(cells, key, false), cw) + "  " +
                 std::to_string(cell_seeds(cells, key)) + "\n";
        }
        return t;
    };
    report.method_table = method_block("active vs passive", {Method::ACTIVE, Method::PASSIVE});
    report.attack_table = method_block("detection vs threshold attacks",
                                       {Method::ACTIVE, Method::MIA_LOSS, Method::MIA_CONF});

    report.footnotes =
        "notes:\n"
        "- membership accuracies are balanced; comparison sets are built balanced\n"
        "- whether the reference comparisons report balanced or raw accuracy is unstated; "
        "balanced is reported here\n"
        "- spread is the population standard deviation over seeds\n"
        "- loss normalizers are exponential moving averages of absolute raw losses\n"
        "- attack rows store the attack's balanced accuracy in mint_acc and the attacked "
        "model's accuracy in audited_acc\n";
    return report;
}

static const char* kResultsHeader = "method,setup,dataset,seed,mint_acc,audited_acc";

void write_results_csv(const std::filesystem::path& path, const std::vector<MetricRecord>& records) {
    for (const auto& r : records)
        if (r.setup.find_first_of(",\n") != std::string::npos ||
            r.dataset.find_first_of(",\n") != std::string::npos)
            throw config_error("results csv: setup and dataset must not contain commas or newlines");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open results file for writing: " + path.string());
    out << kResultsHeader << "\n";
    for (const auto& r : records) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%s,%s,%s,%llu,%.6f,%.6f\n", to_string(r.method).c_str(),
                      r.setup.c_str(), r.dataset.c_str(),
                      static_cast<unsigned long long>(r.seed), r.mint_acc, r.audited_acc);
        out << buf;
    }
    if (!out) throw data_error("failed writing results file: " + path.string());
}

std::vector<MetricRecord> read_results_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open results file: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kResultsHeader)
        throw data_error("results file " + path.string() + ": bad header (expected \"" +
                         kResultsHeader + "\")");
    std::vector<MetricRecord> records;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 6)
            throw data_error("results file " + path.string() + " line " + std::to_string(lineno) +
                             ": expected 6 fields");
        MetricRecord r;
        r.method = method_from_string(fields[0]);
        r.setup = fields[1];
        r.dataset = fields[2];
        try {
            r.seed = std::stoull(fields[3]);
            r.mint_acc = std::stod(fields[4]);
            r.audited_acc = std::stod(fields[5]);
        } catch (const std::exception&) {
            throw data_error("results file " + path.string() + " line " + std::to_string(lineno) +
                             ": unparsable numeric field");
        }
        if (r.mint_acc < 0.0 || r.mint_acc > 1.0 || r.audited_acc < 0.0 || r.audited_acc > 1.0)
            throw data_error("results file " + path.string() + " line " + std::to_string(lineno) +
                             ": accuracy outside [0,1]");
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace amint
