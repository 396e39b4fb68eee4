#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctr/common.hpp"
#include "ctr/date.hpp"

namespace ctr {

inline constexpr size_t kImageDim = 2048;

// One logged (query, listing) impression. Counter fields are the listing's
// counts over the producer's counter window as of the record's date
// (exclusive), so a record never carries its own outcome.
struct ListingRecord {
  std::string listing_id;
  std::string query;
  std::string title;
  std::vector<std::string> tags;
  double price = 0.0;
  int64_t impressions = 0;
  int64_t clicks = 0;
  int64_t favorites = 0;
  int64_t purchases = 0;
  std::shared_ptr<const std::vector<float>> image_embedding;  // kImageDim entries when present
  std::string image_ref;  // sidecar key; empty when the listing has no image
  int label = 0;
  Date date;
};

void validate(const ListingRecord& rec);

// Dense image embeddings keyed by listing id, stored in a binary sidecar next
// to the log so the log lines stay small.
class ImageStore {
 public:
  static ImageStore load(const std::string& path);
  void save(const std::string& path) const;

  std::shared_ptr<const std::vector<float>> find(const std::string& key) const;
  void insert(const std::string& key, std::vector<float> embedding);
  size_t size() const { return map_.size(); }

 private:
  std::unordered_map<std::string, std::shared_ptr<const std::vector<float>>> map_;
};

// Line-delimited JSON log I/O. When an image store is given, records with an
// image_ref get their embedding pointer wired on load.
ListingRecord parse_log_line(std::string_view line, size_t line_number);
void write_log_line(std::ostream& out, const ListingRecord& rec);
std::vector<ListingRecord> read_log_file(const std::string& path, const ImageStore* images);

}  // namespace ctr
