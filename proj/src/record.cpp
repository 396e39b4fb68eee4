#include "ctr/record.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace ctr {

using nlohmann::json;

void validate(const ListingRecord& rec) {
  if (rec.listing_id.empty()) throw DataError("record: empty listing_id");
  if (rec.price < 0.0 || !std::isfinite(rec.price)) throw DataError("record: negative price");
  if (rec.impressions < 0 || rec.clicks < 0 || rec.favorites < 0 || rec.purchases < 0) {
    throw DataError("record: negative counter");
  }
  if (rec.clicks > rec.impressions) {
    throw DataError("record " + rec.listing_id + ": clicks > impressions");
  }
  if (rec.label != 0 && rec.label != 1) throw DataError("record: label must be 0 or 1");
  if (rec.image_embedding) {
    if (rec.image_embedding->size() != kImageDim) {
      throw DataError("record " + rec.listing_id + ": image embedding size != " +
                      std::to_string(kImageDim));
    }
    for (const float f : *rec.image_embedding) {
      if (!std::isfinite(f)) throw DataError("record " + rec.listing_id + ": non-finite embedding");
    }
  }
}

ListingRecord parse_log_line(std::string_view line, size_t line_number) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError("log line " + std::to_string(line_number) + ": " + e.what());
  }
  try {
    ListingRecord rec;
    rec.listing_id = j.at("listing_id").get<std::string>();
    rec.query = j.value("query", std::string{});
    rec.title = j.value("title", std::string{});
    if (j.contains("tags")) rec.tags = j.at("tags").get<std::vector<std::string>>();
    rec.price = j.value("price", 0.0);
    rec.impressions = j.value("impressions", int64_t{0});
    rec.clicks = j.value("clicks", int64_t{0});
    rec.favorites = j.value("favorites", int64_t{0});
    rec.purchases = j.value("purchases", int64_t{0});
    rec.label = j.at("label").get<int>();
    rec.date = Date::parse(j.at("date").get<std::string>());
    if (j.contains("image_ref") && !j.at("image_ref").is_null()) {
      rec.image_ref = j.at("image_ref").get<std::string>();
    }
    validate(rec);
    return rec;
  } catch (const json::exception& e) {
    throw DataError("log line " + std::to_string(line_number) + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError("log line " + std::to_string(line_number) + ": " + e.what());
  }
}

void write_log_line(std::ostream& out, const ListingRecord& rec) {
  json j;
  j["listing_id"] = rec.listing_id;
  j["query"] = rec.query;
  j["title"] = rec.title;
  j["tags"] = rec.tags;
  j["price"] = rec.price;
  j["impressions"] = rec.impressions;
  j["clicks"] = rec.clicks;
  j["favorites"] = rec.favorites;
  j["purchases"] = rec.purchases;
  j["label"] = rec.label;
  j["date"] = rec.date.to_string();
  if (!rec.image_ref.empty()) j["image_ref"] = rec.image_ref;
  out << j.dump() << '\n';
}

std::vector<ListingRecord> read_log_file(const std::string& path, const ImageStore* images) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open log file: " + path);
  std::vector<ListingRecord> records;
  std::string line;
  size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    ListingRecord rec = parse_log_line(line, line_number);
    if (images && !rec.image_ref.empty()) {
      rec.image_embedding = images->find(rec.image_ref);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

namespace {

constexpr char kImageMagic[8] = {'C', 'T', 'R', 'I', 'M', 'G', '1', '\0'};

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError("image sidecar truncated");
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace

ImageStore ImageStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image sidecar: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kImageMagic, 8) != 0) {
    throw DataError("bad image sidecar header: " + path);
  }
  ImageStore store;
  const uint32_t count = get_u32(in);
  for (uint32_t k = 0; k < count; ++k) {
    const uint32_t id_len = get_u32(in);
    std::string id(id_len, '\0');
    in.read(id.data(), id_len);
    const uint32_t dim = get_u32(in);
    if (dim != kImageDim) throw DataError("image sidecar: unexpected embedding size");
    auto emb = std::make_shared<std::vector<float>>(dim);
    in.read(reinterpret_cast<char*>(emb->data()), static_cast<std::streamsize>(dim * sizeof(float)));
    if (!in) throw DataError("image sidecar truncated");
    store.map_.emplace(std::move(id), std::move(emb));
  }
  return store;
}

void ImageStore::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image sidecar: " + path);
  out.write(kImageMagic, 8);
  put_u32(out, static_cast<uint32_t>(map_.size()));
  // Deterministic file bytes: emit keys in sorted order.
  std::vector<const std::string*> keys;
  keys.reserve(map_.size());
  for (const auto& [key, _] : map_) keys.push_back(&key);
  std::sort(keys.begin(), keys.end(),
            [](const std::string* a, const std::string* b) { return *a < *b; });
  for (const std::string* key : keys) {
    const auto& emb = *map_.at(*key);
    put_u32(out, static_cast<uint32_t>(key->size()));
    out.write(key->data(), static_cast<std::streamsize>(key->size()));
    put_u32(out, static_cast<uint32_t>(emb.size()));
    out.write(reinterpret_cast<const char*>(emb.data()),
              static_cast<std::streamsize>(emb.size() * sizeof(float)));
  }
  if (!out) throw DataError("failed writing image sidecar: " + path);
}

std::shared_ptr<const std::vector<float>> ImageStore::find(const std::string& key) const {
  const auto it = map_.find(key);
  return it == map_.end() ? nullptr : it->second;
}

void ImageStore::insert(const std::string& key, std::vector<float> embedding) {
  if (embedding.size() != kImageDim) throw DataError("image embedding size != 2048");
  map_[key] = std::make_shared<std::vector<float>>(std::move(embedding));
}

}  // namespace ctr
