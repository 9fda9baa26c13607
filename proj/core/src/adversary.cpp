#include "qmlsec/adversary.hpp"

#include "qmlsec/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace qmlsec {

namespace {

constexpr double kAngleTol = 1e-9;

bool angles_match(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::abs(a[i] - b[i]) > kAngleTol)
            return false;
    }
    return true;
}

int argmax_lowest(const std::vector<double>& values) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(values.size()); ++i) {
        if (values[static_cast<std::size_t>(i)] > values[static_cast<std::size_t>(best)])
            best = i;
    }
    return best;
}

// Generic weighted vote; lowest class index wins ties.
std::pair<int, double> weighted_winner(const PointHistory& history,
                                       const std::function<double(int)>& weight_of_epoch) {
    if (history.guesses.empty())
        throw DataError("cannot vote on an empty history");
    std::map<int, double> scores;
    double total = 0.0;
    for (const auto& g : history.guesses) {
        const double w = weight_of_epoch(g.epoch);
        scores[g.cls] += w;
        total += w;
    }
    int winner = scores.begin()->first;
    double best = scores.begin()->second;
    for (const auto& [cls, score] : scores) {
        if (score > best) {
            winner = cls;
            best = score;
        }
    }
    return {winner, best / total};
}

} // namespace

void LogStore::observe(int epoch_index, LogRecord record) {
    if (epoch_index < 1)
        throw DataError("epoch indices are 1-based");
    if (epoch_index < max_epoch_)
        throw DataError("epoch indices must be monotone");
    record.epoch = epoch_index;
    if (!records_.empty() && record.angles.size() != records_.front().angles.size())
        throw DataError("log records must share the victim's qubit count");
    max_epoch_ = std::max(max_epoch_, epoch_index);
    records_.push_back(std::move(record));
}

void LogStore::on_epoch(int epoch_index, const std::vector<ForwardRecord>& records) {
    for (const auto& rec : records) {
        LogRecord lr;
        lr.angles = rec.angles;
        lr.expvals = rec.expvals;
        lr.user_probs = rec.user_probs;
        observe(epoch_index, std::move(lr));
    }
}

LogStore LogStore::prefix(int epoch) const {
    LogStore out;
    for (const auto& rec : records_) {
        if (rec.epoch <= epoch)
            out.observe(rec.epoch, rec);
    }
    return out;
}

void LogStore::save_jsonl(const std::string& path) const {
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write '" + path + "'");
    for (const auto& rec : records_) {
        nlohmann::json j = {
            {"epoch", rec.epoch},
            {"angles", rec.angles},
            {"expvals", rec.expvals},
        };
        if (!rec.user_probs.empty())
            j["probs"] = rec.user_probs;
        out << j.dump() << '\n';
    }
}

LogStore LogStore::load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open '" + path + "'");
    LogStore store;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            throw DataError("'" + path + "' line " + std::to_string(line_no) +
                            ": malformed record");
        }
        LogRecord rec;
        try {
            rec.epoch = j.at("epoch").get<int>();
            rec.angles = j.at("angles").get<std::vector<double>>();
            rec.expvals = j.at("expvals").get<std::vector<double>>();
            if (j.contains("probs"))
                rec.user_probs = j.at("probs").get<std::vector<double>>();
        } catch (const nlohmann::json::exception&) {
            throw DataError("'" + path + "' line " + std::to_string(line_no) +
                            ": missing field");
        }
        store.observe(rec.epoch, std::move(rec));
    }
    return store;
}

int infer_epoch_label(const LogRecord& record, const std::vector<int>& assumed_qubits) {
    if (assumed_qubits.empty())
        throw DataError("assumed qubit subset must be nonempty");
    std::vector<double> restricted;
    restricted.reserve(assumed_qubits.size());
    for (int q : assumed_qubits) {
        if (q < 0 || static_cast<std::size_t>(q) >= record.expvals.size())
            throw DataError("assumed qubit out of range");
        restricted.push_back(record.expvals[static_cast<std::size_t>(q)]);
    }
    return argmax_lowest(restricted);
}

std::vector<PointHistory> group_points(const LogStore& store, AdversaryView view,
                                       const std::vector<int>& assumed_qubits) {
    if (store.empty())
        throw DataError("cannot group an empty log");

    std::vector<PointHistory> histories;
    for (const auto& rec : store.records()) {
        int cls;
        if (view == AdversaryView::class_probs) {
            if (rec.user_probs.empty())
                throw DataError("class_probs view requires recorded probabilities");
            cls = argmax_lowest(rec.user_probs);
        } else {
            cls = infer_epoch_label(rec, assumed_qubits);
        }

        PointHistory* hist = nullptr;
        for (auto& h : histories) {
            if (angles_match(h.angles, rec.angles)) {
                hist = &h;
                break;
            }
        }
        if (!hist) {
            histories.push_back({rec.angles, {}});
            hist = &histories.back();
        }
        // First observation per epoch wins; raw duplicates are ignored here.
        if (!hist->guesses.empty() && hist->guesses.back().epoch == rec.epoch)
            continue;
        hist->guesses.push_back({rec.epoch, cls});
    }
    return histories;
}

int majority_vote(const PointHistory& history) {
    return weighted_winner(history, [](int) { return 1.0; }).first;
}

int weighted_linear_vote(const PointHistory& history) {
    return weighted_winner(history, [](int epoch) { return static_cast<double>(epoch); }).first;
}

int weighted_exp_vote(const PointHistory& history, int total_epochs) {
    if (total_epochs < 1)
        throw DataError("total_epochs must be >= 1");
    const int rollover = static_cast<int>(std::ceil(0.9 * total_epochs));
    return weighted_winner(history, [rollover](int epoch) {
               return std::ldexp(1.0, std::min(epoch, rollover) - 1);
           })
        .first;
}

const char* heuristic_name(Heuristic h) {
    switch (h) {
    case Heuristic::majority:
        return "majority";
    case Heuristic::weighted_linear:
        return "weighted_linear";
    case Heuristic::weighted_exp:
        return "weighted_exp";
    }
    return "unknown";
}

Heuristic heuristic_from_name(const std::string& name) {
    if (name == "majority")
        return Heuristic::majority;
    if (name == "weighted_linear" || name == "wlinear")
        return Heuristic::weighted_linear;
    if (name == "weighted_exp" || name == "wexp")
        return Heuristic::weighted_exp;
    throw ConfigError("unknown heuristic '" + name + "'");
}

ExtractedDataset extract(const LogStore& store, Heuristic heuristic, AdversaryView view,
                         const std::vector<int>& assumed_qubits, int total_epochs) {
    const auto histories = group_points(store, view, assumed_qubits);

    int label_space = static_cast<int>(assumed_qubits.size());
    if (view == AdversaryView::class_probs)
        label_space = static_cast<int>(store.records().front().user_probs.size());

    ExtractedDataset out;
    out.heuristic = heuristic;
    out.label_space = label_space;
    out.points.reserve(histories.size());
    for (const auto& hist : histories) {
        std::pair<int, double> vote;
        switch (heuristic) {
        case Heuristic::majority:
            vote = weighted_winner(hist, [](int) { return 1.0; });
            break;
        case Heuristic::weighted_linear:
            vote = weighted_winner(hist, [](int e) { return static_cast<double>(e); });
            break;
        case Heuristic::weighted_exp: {
            const int rollover = static_cast<int>(std::ceil(0.9 * total_epochs));
            vote = weighted_winner(hist, [rollover](int e) {
                return std::ldexp(1.0, std::min(e, rollover) - 1);
            });
            break;
        }
        }
        out.points.push_back({hist.angles, vote.first, vote.second});
    }
    return out;
}

void save_extracted_csv(const ExtractedDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write '" + path + "'");
    const std::size_t d = ds.points.empty() ? 0 : ds.points.front().angles.size();
    for (std::size_t j = 0; j < d; ++j)
        out << 'a' << j << ',';
    out << "voted_label,margin\n";
    char buf[32];
    for (const auto& p : ds.points) {
        for (double a : p.angles) {
            std::snprintf(buf, sizeof(buf), "%.17g", a);
            out << buf << ',';
        }
        std::snprintf(buf, sizeof(buf), "%.17g", p.margin);
        out << p.label << ',' << buf << '\n';
    }
}

ExtractedDataset load_extracted_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open '" + path + "'");
    std::string header;
    if (!std::getline(in, header))
        throw DataError("'" + path + "' is empty");

    std::size_t n_cols = 1 + static_cast<std::size_t>(std::count(header.begin(), header.end(), ','));
    if (n_cols < 3)
        throw DataError("'" + path + "' is not an extraction CSV");
    const std::size_t d = n_cols - 2;

    ExtractedDataset ds;
    std::string line;
    std::size_t line_no = 1;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        std::stringstream ss(line);
        std::string cell;
        ExtractedPoint p;
        for (std::size_t j = 0; j < d; ++j) {
            if (!std::getline(ss, cell, ','))
                throw DataError("'" + path + "' line " + std::to_string(line_no) + ": short row");
            p.angles.push_back(std::stod(cell));
        }
        if (!std::getline(ss, cell, ','))
            throw DataError("'" + path + "' line " + std::to_string(line_no) + ": short row");
        p.label = std::stoi(cell);
        if (!std::getline(ss, cell, ','))
            throw DataError("'" + path + "' line " + std::to_string(line_no) + ": short row");
        p.margin = std::stod(cell);
        max_label = std::max(max_label, p.label);
        ds.points.push_back(std::move(p));
    }
    ds.label_space = max_label + 1;
    return ds;
}

double extraction_accuracy(const ExtractedDataset& extracted,
                           const std::vector<std::vector<double>>& true_angles,
                           const std::vector<int>& true_labels) {
    if (extracted.points.empty())
        return 0.0;
    int hits = 0;
    for (const auto& p : extracted.points) {
        for (std::size_t i = 0; i < true_angles.size(); ++i) {
            if (angles_match(p.angles, true_angles[i])) {
                if (p.label == true_labels[i])
                    ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(extracted.points.size());
}

} // namespace qmlsec
