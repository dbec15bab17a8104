#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace irt {

// Parse/validation failure with the offending location (1-based; 0 = n/a).
class CsvError : public std::runtime_error {
  public:
    CsvError(std::string msg, std::size_t row, std::size_t col)
        : std::runtime_error(std::move(msg)), row_(row), col_(col) {}
    std::size_t row() const { return row_; }
    std::size_t col() const { return col_; }

  private:
    std::size_t row_, col_;
};

struct ItemMeta {
    std::string class_label;
    std::optional<int> severity;  // 1..5 when present
};

// Binary n x m correctness matrix. Immutable after construction.
class ResponseMatrix {
  public:
    ResponseMatrix(std::vector<std::string> model_ids,
                   std::vector<std::string> item_ids,
                   std::vector<std::uint8_t> cells,
                   std::optional<std::vector<ItemMeta>> item_meta = std::nullopt);

    std::size_t n_models() const { return model_ids_.size(); }
    std::size_t n_items() const { return item_ids_.size(); }
    const std::vector<std::string>& model_ids() const { return model_ids_; }
    const std::vector<std::string>& item_ids() const { return item_ids_; }
    const std::vector<std::uint8_t>& cells() const { return cells_; }
    std::uint8_t cell(std::size_t i, std::size_t j) const {
        return cells_[i * item_ids_.size() + j];
    }

    bool has_item_meta() const { return item_meta_.has_value(); }
    const std::vector<ItemMeta>& item_meta() const;

    // Row mean: fraction of items model i answers correctly.
    double accuracy(std::size_t model_index) const;
    // Column mean: fraction of models answering item j correctly.
    double mean_item_score(std::size_t item_index) const;

    ResponseMatrix with_item_meta(std::vector<ItemMeta> meta) const;

  private:
    std::vector<std::string> model_ids_;
    std::vector<std::string> item_ids_;
    std::vector<std::uint8_t> cells_;
    std::optional<std::vector<ItemMeta>> item_meta_;
};

// n x m maximum-softmax-confidence matrix, cells in [0,1].
class ConfidenceMatrix {
  public:
    ConfidenceMatrix(std::vector<std::string> model_ids,
                     std::vector<std::string> item_ids,
                     std::vector<double> cells);

    std::size_t n_models() const { return model_ids_.size(); }
    std::size_t n_items() const { return item_ids_.size(); }
    const std::vector<std::string>& model_ids() const { return model_ids_; }
    const std::vector<std::string>& item_ids() const { return item_ids_; }
    const std::vector<double>& cells() const { return cells_; }
    double cell(std::size_t i, std::size_t j) const {
        return cells_[i * item_ids_.size() + j];
    }

  private:
    std::vector<std::string> model_ids_;
    std::vector<std::string> item_ids_;
    std::vector<double> cells_;
};

// Predicted class labels per model/item plus the ground-truth label per item.
class PredictionMatrix {
  public:
    PredictionMatrix(std::vector<std::string> model_ids,
                     std::vector<std::string> item_ids,
                     std::vector<std::string> predicted,
                     std::vector<std::string> truth);

    std::size_t n_models() const { return model_ids_.size(); }
    std::size_t n_items() const { return item_ids_.size(); }
    const std::vector<std::string>& model_ids() const { return model_ids_; }
    const std::vector<std::string>& item_ids() const { return item_ids_; }
    const std::string& predicted(std::size_t i, std::size_t j) const {
        return predicted_[i * item_ids_.size() + j];
    }
    const std::vector<std::string>& truth() const { return truth_; }

  private:
    std::vector<std::string> model_ids_;
    std::vector<std::string> item_ids_;
    std::vector<std::string> predicted_;
    std::vector<std::string> truth_;
};

// cell(i,j) = 1 iff predicted(i,j) equals truth(j).
ResponseMatrix derive_responses(const PredictionMatrix& pred);

// Throws if the two matrices differ in shape or identifier order.
void check_aligned(const ResponseMatrix& resp, const ConfidenceMatrix& conf);

// --- CSV persistence -------------------------------------------------------
// Matrix CSV: header `model_id,<item ids...>`; one row per model.
// Item metadata CSV: `item_id,class_label,severity` (severity may be blank).
// Truth-label CSV: `item_id,label`.

ResponseMatrix load_response_matrix(const std::string& path);
void save_response_matrix(const ResponseMatrix& m, const std::string& path);

ConfidenceMatrix load_confidence_matrix(const std::string& path);
void save_confidence_matrix(const ConfidenceMatrix& m, const std::string& path);

PredictionMatrix load_prediction_matrix(const std::string& predictions_path,
                                        const std::string& truth_path);
void save_prediction_matrix(const PredictionMatrix& m,
                            const std::string& predictions_path,
                            const std::string& truth_path);

// Returns metas ordered like `item_ids`; every item must be covered.
std::vector<ItemMeta> load_item_meta(const std::string& path,
                                     const std::vector<std::string>& item_ids);
void save_item_meta(const std::vector<std::string>& item_ids,
                    const std::vector<ItemMeta>& meta, const std::string& path);

}  // namespace irt
