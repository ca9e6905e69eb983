#pragma once

#include <array>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "fusionlab/matrix.hpp"

namespace fusionlab {

// One device sample: embeddings only, never raw text or pixels.
struct EmbeddingRecord {
    std::string id;
    std::optional<int> label;  // risk class in {1,2,3} when present
    std::vector<double> text_vec;
    std::optional<std::vector<double>> image_vec;
};

// An immutable-after-construction collection of records with uniform vector
// widths and unique ids.
class Corpus {
  public:
    Corpus() = default;
    Corpus(std::vector<EmbeddingRecord> records, std::size_t d_text, std::size_t d_image);

    const std::vector<EmbeddingRecord>& records() const { return records_; }
    const EmbeddingRecord& at(std::size_t i) const { return records_[i]; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

    std::size_t d_text() const { return d_text_; }
    // Width of the image columns; 0 when the corpus carries no image slots.
    std::size_t d_image() const { return d_image_; }

    std::array<std::size_t, 3> class_counts() const;
    std::size_t labeled_count() const;
    std::size_t with_image_count() const;
    bool all_labeled() const;
    bool all_have_images() const;
    bool contains_id(const std::string& id) const { return ids_.count(id) != 0; }

    void append(EmbeddingRecord rec);

  private:
    void validate_record(const EmbeddingRecord& rec) const;

    std::vector<EmbeddingRecord> records_;
    std::unordered_set<std::string> ids_;
    std::size_t d_text_ = 0;
    std::size_t d_image_ = 0;
};

// Which feature columns an operation works on.
enum class FeatureSelect { Text, Image, Both };

// CSV ingestion per the documented corpus format: header
// `id,label,t0..t{dT-1},i0..i{dI-1}`, empty label = unlabeled, all image
// cells empty = image absent.  Malformed rows raise FormatError naming the
// line.
Corpus load_corpus(const std::string& path);

// Writes the same format with >= 17 significant digits per float so that
// load(save(c)) reproduces every value exactly.
void save_corpus(const Corpus& c, const std::string& path);

// Partition by label presence; union preserves all records.
std::pair<Corpus, Corpus> split_labeled(const Corpus& c);

// Multimodal training requires both modalities; this is the documented
// filter step.  keep_missing retains image-less records for text-only runs.
Corpus drop_missing_images(const Corpus& c, bool keep_missing = false);

// Dense views used by the classical models and the fusion trainer.
Matrix text_matrix(const Corpus& c);
Matrix image_matrix(const Corpus& c);   // throws ModalityError on missing images
Matrix fused_matrix(const Corpus& c);   // [text || image]
Matrix feature_matrix(const Corpus& c, FeatureSelect which);
std::vector<int> labels_of(const Corpus& c);  // throws DataError on unlabeled records

}  // namespace fusionlab
