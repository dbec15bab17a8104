#include "irt/matrix.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace irt {

namespace {

// Identifiers and labels end up in unquoted CSV fields.
// TODO: support RFC 4180 quoting instead of rejecting these characters.
void check_csv_token(const std::string& s, const char* what) {
    if (s.empty() || s.find_first_of(",\r\n") != std::string::npos)
        throw std::invalid_argument(std::string(what) + " '" + s +
                                    "' must be non-empty and free of commas/newlines");
}

void check_unique(const std::vector<std::string>& ids, const char* what) {
    std::unordered_set<std::string> seen;
    for (std::size_t k = 0; k < ids.size(); ++k) {
        check_csv_token(ids[k], what);
        if (!seen.insert(ids[k]).second)
            throw CsvError(std::string(what) + " id '" + ids[k] + "' appears more than once",
                           0, k + 1);
    }
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CsvError("cannot open '" + path + "'", 0, 0);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    // ignore a single trailing blank line
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.empty()) throw CsvError("'" + path + "' is empty", 0, 0);
    return lines;
}

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, std::size_t row, std::size_t col) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last)
        throw CsvError("cell at row " + std::to_string(row) + ", column " +
                           std::to_string(col) + " is not a number: '" + s + "'",
                       row, col);
    return v;
}

struct RawTable {
    std::vector<std::string> model_ids;
    std::vector<std::string> item_ids;
    std::vector<std::vector<std::string>> rows;  // cells only, per model
};

RawTable load_matrix_table(const std::string& path) {
    const auto lines = read_lines(path);
    auto header = split_csv_line(lines[0]);
    if (header.size() < 2 || header[0] != "model_id")
        throw CsvError("'" + path + "': header must start with 'model_id' followed by item ids",
                       1, 1);
    RawTable t;
    t.item_ids.assign(header.begin() + 1, header.end());
    check_unique(t.item_ids, "item");
    for (std::size_t r = 1; r < lines.size(); ++r) {
        auto fields = split_csv_line(lines[r]);
        if (fields.size() != header.size())
            throw CsvError("row " + std::to_string(r + 1) + " has " +
                               std::to_string(fields.size()) + " fields, expected " +
                               std::to_string(header.size()),
                           r + 1, 0);
        t.model_ids.push_back(fields[0]);
        fields.erase(fields.begin());
        t.rows.push_back(std::move(fields));
    }
    if (t.model_ids.empty())
        throw CsvError("'" + path + "' contains no data rows", 1, 0);
    check_unique(t.model_ids, "model");
    return t;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << content;
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

}  // namespace

ResponseMatrix::ResponseMatrix(std::vector<std::string> model_ids,
                               std::vector<std::string> item_ids,
                               std::vector<std::uint8_t> cells,
                               std::optional<std::vector<ItemMeta>> item_meta)
    : model_ids_(std::move(model_ids)),
      item_ids_(std::move(item_ids)),
      cells_(std::move(cells)),
      item_meta_(std::move(item_meta)) {
    if (model_ids_.empty() || item_ids_.empty())
        throw std::invalid_argument("ResponseMatrix: needs at least one model and one item");
    if (cells_.size() != model_ids_.size() * item_ids_.size())
        throw std::invalid_argument("ResponseMatrix: cell count does not match n*m");
    check_unique(model_ids_, "model");
    check_unique(item_ids_, "item");
    for (std::size_t k = 0; k < cells_.size(); ++k) {
        if (cells_[k] > 1)
            throw std::invalid_argument(
                "ResponseMatrix: cell at row " + std::to_string(k / item_ids_.size() + 1) +
                ", column " + std::to_string(k % item_ids_.size() + 1) + " is not 0 or 1");
    }
    if (item_meta_) {
        if (item_meta_->size() != item_ids_.size())
            throw std::invalid_argument("ResponseMatrix: item metadata must cover every item");
        for (const auto& m : *item_meta_) {
            check_csv_token(m.class_label, "class label");
            if (m.severity && (*m.severity < 1 || *m.severity > 5))
                throw std::invalid_argument("ResponseMatrix: severity must lie in 1..5");
        }
    }
}

const std::vector<ItemMeta>& ResponseMatrix::item_meta() const {
    if (!item_meta_) throw std::logic_error("ResponseMatrix: no item metadata attached");
    return *item_meta_;
}

double ResponseMatrix::accuracy(std::size_t model_index) const {
    if (model_index >= n_models())
        throw std::out_of_range("accuracy: model index " + std::to_string(model_index) +
                                " out of range");
    std::size_t ones = 0;
    for (std::size_t j = 0; j < n_items(); ++j) ones += cell(model_index, j);
    return static_cast<double>(ones) / static_cast<double>(n_items());
}

double ResponseMatrix::mean_item_score(std::size_t item_index) const {
    if (item_index >= n_items())
        throw std::out_of_range("mean_item_score: item index " + std::to_string(item_index) +
                                " out of range");
    std::size_t ones = 0;
    for (std::size_t i = 0; i < n_models(); ++i) ones += cell(i, item_index);
    return static_cast<double>(ones) / static_cast<double>(n_models());
}

ResponseMatrix ResponseMatrix::with_item_meta(std::vector<ItemMeta> meta) const {
    return ResponseMatrix(model_ids_, item_ids_, cells_, std::move(meta));
}

ConfidenceMatrix::ConfidenceMatrix(std::vector<std::string> model_ids,
                                   std::vector<std::string> item_ids,
                                   std::vector<double> cells)
    : model_ids_(std::move(model_ids)),
      item_ids_(std::move(item_ids)),
      cells_(std::move(cells)) {
    if (model_ids_.empty() || item_ids_.empty())
        throw std::invalid_argument("ConfidenceMatrix: needs at least one model and one item");
    if (cells_.size() != model_ids_.size() * item_ids_.size())
        throw std::invalid_argument("ConfidenceMatrix: cell count does not match n*m");
    check_unique(model_ids_, "model");
    check_unique(item_ids_, "item");
    for (std::size_t k = 0; k < cells_.size(); ++k) {
        if (!(cells_[k] >= 0.0 && cells_[k] <= 1.0))
            throw std::invalid_argument(
                "ConfidenceMatrix: cell at row " + std::to_string(k / item_ids_.size() + 1) +
                ", column " + std::to_string(k % item_ids_.size() + 1) +
                " lies outside [0,1]");
    }
}

PredictionMatrix::PredictionMatrix(std::vector<std::string> model_ids,
                                   std::vector<std::string> item_ids,
                                   std::vector<std::string> predicted,
                                   std::vector<std::string> truth)
    : model_ids_(std::move(model_ids)),
      item_ids_(std::move(item_ids)),
      predicted_(std::move(predicted)),
      truth_(std::move(truth)) {
    if (model_ids_.empty() || item_ids_.empty())
        throw std::invalid_argument("PredictionMatrix: needs at least one model and one item");
    if (predicted_.size() != model_ids_.size() * item_ids_.size())
        throw std::invalid_argument("PredictionMatrix: prediction count does not match n*m");
    if (truth_.size() != item_ids_.size())
        throw std::invalid_argument("PredictionMatrix: truth must have exactly one label per item");
    check_unique(model_ids_, "model");
    check_unique(item_ids_, "item");
    for (const auto& label : predicted_) check_csv_token(label, "predicted label");
    for (const auto& label : truth_) check_csv_token(label, "truth label");
}

ResponseMatrix derive_responses(const PredictionMatrix& pred) {
    const std::size_t n = pred.n_models(), m = pred.n_items();
    std::vector<std::uint8_t> cells(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            cells[i * m + j] = pred.predicted(i, j) == pred.truth()[j] ? 1 : 0;
    return ResponseMatrix(pred.model_ids(), pred.item_ids(), std::move(cells));
}

void check_aligned(const ResponseMatrix& resp, const ConfidenceMatrix& conf) {
    if (resp.model_ids() != conf.model_ids() || resp.item_ids() != conf.item_ids())
        throw std::invalid_argument(
            "response and confidence matrices have different identifiers or order");
}

ResponseMatrix load_response_matrix(const std::string& path) {
    const RawTable t = load_matrix_table(path);
    std::vector<std::uint8_t> cells;
    cells.reserve(t.model_ids.size() * t.item_ids.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        for (std::size_t c = 0; c < t.rows[r].size(); ++c) {
            const std::string& s = t.rows[r][c];
            if (s == "0")
                cells.push_back(0);
            else if (s == "1")
                cells.push_back(1);
            else
                throw CsvError("cell for model '" + t.model_ids[r] + "', item '" +
                                   t.item_ids[c] + "' (row " + std::to_string(r + 2) +
                                   ", column " + std::to_string(c + 2) +
                                   ") must be 0 or 1, got '" + s + "'",
                               r + 2, c + 2);
        }
    }
    return ResponseMatrix(t.model_ids, t.item_ids, std::move(cells));
}

void save_response_matrix(const ResponseMatrix& m, const std::string& path) {
    std::ostringstream out;
    out << "model_id";
    for (const auto& id : m.item_ids()) out << ',' << id;
    out << '\n';
    for (std::size_t i = 0; i < m.n_models(); ++i) {
        out << m.model_ids()[i];
        for (std::size_t j = 0; j < m.n_items(); ++j) out << ',' << int(m.cell(i, j));
        out << '\n';
    }
    write_file(path, out.str());
}

ConfidenceMatrix load_confidence_matrix(const std::string& path) {
    const RawTable t = load_matrix_table(path);
    std::vector<double> cells;
    cells.reserve(t.model_ids.size() * t.item_ids.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r)
        for (std::size_t c = 0; c < t.rows[r].size(); ++c) {
            const double v = parse_double(t.rows[r][c], r + 2, c + 2);
            if (!(v >= 0.0 && v <= 1.0))
                throw CsvError("confidence for model '" + t.model_ids[r] + "', item '" +
                                   t.item_ids[c] + "' (row " + std::to_string(r + 2) +
                                   ", column " + std::to_string(c + 2) +
                                   ") lies outside [0,1]: " + t.rows[r][c],
                               r + 2, c + 2);
            cells.push_back(v);
        }
    return ConfidenceMatrix(t.model_ids, t.item_ids, std::move(cells));
}

void save_confidence_matrix(const ConfidenceMatrix& m, const std::string& path) {
    std::ostringstream out;
    out << "model_id";
    for (const auto& id : m.item_ids()) out << ',' << id;
    out << '\n';
    for (std::size_t i = 0; i < m.n_models(); ++i) {
        out << m.model_ids()[i];
        for (std::size_t j = 0; j < m.n_items(); ++j) out << ',' << format_double(m.cell(i, j));
        out << '\n';
    }
    write_file(path, out.str());
}

PredictionMatrix load_prediction_matrix(const std::string& predictions_path,
                                        const std::string& truth_path) {
    const RawTable t = load_matrix_table(predictions_path);
    std::vector<std::string> predicted;
    predicted.reserve(t.model_ids.size() * t.item_ids.size());
    for (const auto& row : t.rows)
        for (const auto& cell : row) predicted.push_back(cell);

    const auto lines = read_lines(truth_path);
    if (split_csv_line(lines[0]) != std::vector<std::string>{"item_id", "label"})
        throw CsvError("'" + truth_path + "': header must be 'item_id,label'", 1, 1);
    std::unordered_map<std::string, std::string> truth_by_id;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto fields = split_csv_line(lines[r]);
        if (fields.size() != 2)
            throw CsvError("row " + std::to_string(r + 1) + " in '" + truth_path +
                               "' must have exactly 2 fields",
                           r + 1, 0);
        if (!truth_by_id.emplace(fields[0], fields[1]).second)
            throw CsvError("item '" + fields[0] + "' has more than one truth label", r + 1, 1);
    }
    std::vector<std::string> truth;
    truth.reserve(t.item_ids.size());
    for (const auto& id : t.item_ids) {
        const auto it = truth_by_id.find(id);
        if (it == truth_by_id.end())
            throw CsvError("item '" + id + "' has no truth label in '" + truth_path + "'", 0, 0);
        truth.push_back(it->second);
    }
    return PredictionMatrix(t.model_ids, t.item_ids, std::move(predicted), std::move(truth));
}

void save_prediction_matrix(const PredictionMatrix& m,
                            const std::string& predictions_path,
                            const std::string& truth_path) {
    std::ostringstream out;
    out << "model_id";
    for (const auto& id : m.item_ids()) out << ',' << id;
    out << '\n';
    for (std::size_t i = 0; i < m.n_models(); ++i) {
        out << m.model_ids()[i];
        for (std::size_t j = 0; j < m.n_items(); ++j) out << ',' << m.predicted(i, j);
        out << '\n';
    }
    write_file(predictions_path, out.str());

    std::ostringstream tout;
    tout << "item_id,label\n";
    for (std::size_t j = 0; j < m.n_items(); ++j)
        tout << m.item_ids()[j] << ',' << m.truth()[j] << '\n';
    write_file(truth_path, tout.str());
}

std::vector<ItemMeta> load_item_meta(const std::string& path,
                                     const std::vector<std::string>& item_ids) {
    const auto lines = read_lines(path);
    if (split_csv_line(lines[0]) !=
        std::vector<std::string>{"item_id", "class_label", "severity"})
        throw CsvError("'" + path + "': header must be 'item_id,class_label,severity'", 1, 1);
    std::unordered_map<std::string, ItemMeta> by_id;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto fields = split_csv_line(lines[r]);
        if (fields.size() != 3)
            throw CsvError("row " + std::to_string(r + 1) + " in '" + path +
                               "' must have exactly 3 fields",
                           r + 1, 0);
        ItemMeta meta;
        meta.class_label = fields[1];
        if (!fields[2].empty()) {
            int sev = 0;
            const auto res =
                std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), sev);
            if (res.ec != std::errc() || res.ptr != fields[2].data() + fields[2].size())
                throw CsvError("severity at row " + std::to_string(r + 1) +
                                   " is not an integer: '" + fields[2] + "'",
                               r + 1, 3);
            meta.severity = sev;
        }
        if (!by_id.emplace(fields[0], std::move(meta)).second)
            throw CsvError("item '" + fields[0] + "' has duplicate metadata", r + 1, 1);
    }
    std::vector<ItemMeta> out;
    out.reserve(item_ids.size());
    for (const auto& id : item_ids) {
        const auto it = by_id.find(id);
        if (it == by_id.end())
            throw CsvError("item '" + id + "' has no metadata in '" + path + "'", 0, 0);
        out.push_back(it->second);
    }
    return out;
}

void save_item_meta(const std::vector<std::string>& item_ids,
                    const std::vector<ItemMeta>& meta, const std::string& path) {
    if (item_ids.size() != meta.size())
        throw std::invalid_argument("save_item_meta: metadata must cover every item");
    for (const auto& m : meta) check_csv_token(m.class_label, "class label");
    std::ostringstream out;
    out << "item_id,class_label,severity\n";
    for (std::size_t j = 0; j < item_ids.size(); ++j) {
        out << item_ids[j] << ',' << meta[j].class_label << ',';
        if (meta[j].severity) out << *meta[j].severity;
        out << '\n';
    }
    write_file(path, out.str());
}

}  // namespace irt
