#include "fusionlab/corpus.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fusionlab/errors.hpp"

namespace fusionlab {

Corpus::Corpus(std::vector<EmbeddingRecord> records, std::size_t d_text, std::size_t d_image)
    : d_text_(d_text), d_image_(d_image) {
    records_.reserve(records.size());
    for (auto& rec : records) append(std::move(rec));
}

void Corpus::validate_record(const EmbeddingRecord& rec) const {
    if (rec.text_vec.size() != d_text_) {
        throw ShapeError("corpus: record '" + rec.id + "' has text width " +
                         std::to_string(rec.text_vec.size()) + ", expected " +
                         std::to_string(d_text_));
    }
    if (rec.image_vec && rec.image_vec->size() != d_image_) {
        throw ShapeError("corpus: record '" + rec.id + "' has image width " +
                         std::to_string(rec.image_vec->size()) + ", expected " +
                         std::to_string(d_image_));
    }
    if (rec.image_vec && d_image_ == 0) {
        throw ShapeError("corpus: record '" + rec.id + "' carries an image but the corpus has no image columns");
    }
    if (rec.label && (*rec.label < 1 || *rec.label > 3)) {
        throw DataError("corpus: record '" + rec.id + "' has label " + std::to_string(*rec.label) +
                        " outside {1,2,3}");
    }
}

void Corpus::append(EmbeddingRecord rec) {
    validate_record(rec);
    if (!ids_.insert(rec.id).second) {
        throw DataError("corpus: duplicate id '" + rec.id + "'");
    }
    records_.push_back(std::move(rec));
}

std::array<std::size_t, 3> Corpus::class_counts() const {
    std::array<std::size_t, 3> counts{0, 0, 0};
    for (const auto& r : records_) {
        if (r.label) counts[static_cast<std::size_t>(*r.label - 1)]++;
    }
    return counts;
}

std::size_t Corpus::labeled_count() const {
    std::size_t n = 0;
    for (const auto& r : records_) n += r.label.has_value();
    return n;
}

std::size_t Corpus::with_image_count() const {
    std::size_t n = 0;
    for (const auto& r : records_) n += r.image_vec.has_value();
    return n;
}

bool Corpus::all_labeled() const { return labeled_count() == size(); }

bool Corpus::all_have_images() const { return with_image_count() == size(); }

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    cells.push_back(cur);
    return cells;
}

double parse_float_cell(const std::string& cell, std::size_t line_no) {
    const char* begin = cell.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin || end != begin + cell.size() || !std::isfinite(v)) {
        throw FormatError("corpus: malformed float '" + cell + "' at line " + std::to_string(line_no));
    }
    return v;
}

// Expects names like t0,t1,... starting at `start`; returns how many matched.
std::size_t count_indexed_columns(const std::vector<std::string>& header, std::size_t start,
                                  char prefix) {
    std::size_t n = 0;
    while (start + n < header.size()) {
        const std::string& name = header[start + n];
        std::string expect = std::string(1, prefix) + std::to_string(n);
        if (name != expect) break;
        ++n;
    }
    return n;
}

}  // namespace

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("corpus: cannot open '" + path + "' for reading");

    std::string line;
    if (!std::getline(in, line)) throw FormatError("corpus: empty file '" + path + "'");
    auto header = split_csv_line(line);
    if (header.size() < 2 || header[0] != "id" || header[1] != "label") {
        throw FormatError("corpus: header must start with 'id,label' at line 1");
    }
    std::size_t d_text = count_indexed_columns(header, 2, 't');
    std::size_t d_image = count_indexed_columns(header, 2 + d_text, 'i');
    if (2 + d_text + d_image != header.size()) {
        throw FormatError("corpus: header has unexpected column '" + header[2 + d_text + d_image] +
                          "' at line 1");
    }

    Corpus corpus({}, d_text, d_image);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw FormatError("corpus: expected " + std::to_string(header.size()) + " cells, got " +
                              std::to_string(cells.size()) + " at line " + std::to_string(line_no));
        }
        EmbeddingRecord rec;
        rec.id = cells[0];
        if (rec.id.empty()) throw FormatError("corpus: empty id at line " + std::to_string(line_no));
        if (!cells[1].empty()) {
            if (cells[1] != "1" && cells[1] != "2" && cells[1] != "3") {
                throw FormatError("corpus: label '" + cells[1] + "' outside {1,2,3} at line " +
                                  std::to_string(line_no));
            }
            rec.label = cells[1][0] - '0';
        }
        rec.text_vec.reserve(d_text);
        for (std::size_t j = 0; j < d_text; ++j) {
            rec.text_vec.push_back(parse_float_cell(cells[2 + j], line_no));
        }
        if (d_image > 0) {
            std::size_t empty_cells = 0;
            for (std::size_t j = 0; j < d_image; ++j) empty_cells += cells[2 + d_text + j].empty();
            if (empty_cells == 0) {
                std::vector<double> img;
                img.reserve(d_image);
                for (std::size_t j = 0; j < d_image; ++j) {
                    img.push_back(parse_float_cell(cells[2 + d_text + j], line_no));
                }
                rec.image_vec = std::move(img);
            } else if (empty_cells != d_image) {
                throw FormatError("corpus: partially empty image vector at line " +
                                  std::to_string(line_no));
            }
        }
        try {
            corpus.append(std::move(rec));
        } catch (const Error& e) {
            throw FormatError(std::string(e.what()) + " at line " + std::to_string(line_no));
        }
    }
    return corpus;
}

namespace {

void write_float(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

}  // namespace

void save_corpus(const Corpus& c, const std::string& path) {
    std::string out;
    out += "id,label";
    for (std::size_t j = 0; j < c.d_text(); ++j) out += ",t" + std::to_string(j);
    for (std::size_t j = 0; j < c.d_image(); ++j) out += ",i" + std::to_string(j);
    out += '\n';
    for (const auto& rec : c.records()) {
        if (rec.id.find(',') != std::string::npos || rec.id.find('\n') != std::string::npos) {
            throw FormatError("corpus: id '" + rec.id + "' contains a delimiter");
        }
        out += rec.id;
        out += ',';
        if (rec.label) out += static_cast<char>('0' + *rec.label);
        for (double v : rec.text_vec) {
            out += ',';
            write_float(out, v);
        }
        if (rec.image_vec) {
            for (double v : *rec.image_vec) {
                out += ',';
                write_float(out, v);
            }
        } else {
            for (std::size_t j = 0; j < c.d_image(); ++j) out += ',';
        }
        out += '\n';
    }

    // Temp-then-rename so rereads never observe a half-written file.
    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("corpus: cannot open '" + tmp + "' for writing");
        f.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!f) throw IoError("corpus: write failed for '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("corpus: rename to '" + path + "' failed: " + ec.message());
}

std::pair<Corpus, Corpus> split_labeled(const Corpus& c) {
    Corpus labeled({}, c.d_text(), c.d_image());
    Corpus unlabeled({}, c.d_text(), c.d_image());
    for (const auto& rec : c.records()) {
        (rec.label ? labeled : unlabeled).append(rec);
    }
    return {std::move(labeled), std::move(unlabeled)};
}

Corpus drop_missing_images(const Corpus& c, bool keep_missing) {
    if (keep_missing) return c;
    Corpus out({}, c.d_text(), c.d_image());
    for (const auto& rec : c.records()) {
        if (rec.image_vec) out.append(rec);
    }
    return out;
}

Matrix text_matrix(const Corpus& c) {
    Matrix m(c.size(), c.d_text());
    for (std::size_t i = 0; i < c.size(); ++i) {
        const auto& v = c.at(i).text_vec;
        std::copy(v.begin(), v.end(), m.row_ptr(i));
    }
    return m;
}

Matrix image_matrix(const Corpus& c) {
    if (c.d_image() == 0) throw ModalityError("corpus has no image columns");
    Matrix m(c.size(), c.d_image());
    for (std::size_t i = 0; i < c.size(); ++i) {
        const auto& rec = c.at(i);
        if (!rec.image_vec) throw ModalityError("record '" + rec.id + "' is missing its image vector");
        std::copy(rec.image_vec->begin(), rec.image_vec->end(), m.row_ptr(i));
    }
    return m;
}

Matrix fused_matrix(const Corpus& c) {
    Matrix text = text_matrix(c);
    Matrix image = image_matrix(c);
    Matrix m(c.size(), c.d_text() + c.d_image());
    for (std::size_t i = 0; i < c.size(); ++i) {
        std::copy(text.row_ptr(i), text.row_ptr(i) + text.cols(), m.row_ptr(i));
        std::copy(image.row_ptr(i), image.row_ptr(i) + image.cols(), m.row_ptr(i) + text.cols());
    }
    return m;
}

Matrix feature_matrix(const Corpus& c, FeatureSelect which) {
    switch (which) {
        case FeatureSelect::Text: return text_matrix(c);
        case FeatureSelect::Image: return image_matrix(c);
        case FeatureSelect::Both: return fused_matrix(c);
    }
    throw ConfigError("feature_matrix: bad selector");
}

std::vector<int> labels_of(const Corpus& c) {
    std::vector<int> y;
    y.reserve(c.size());
    for (const auto& rec : c.records()) {
        if (!rec.label) throw DataError("record '" + rec.id + "' is unlabeled");
        y.push_back(*rec.label);
    }
    return y;
}

}  // namespace fusionlab
