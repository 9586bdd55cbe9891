#include "kpref/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <unordered_map>

namespace kpref {

namespace {

namespace fs = std::filesystem;

struct CsvTable {
  std::vector<std::vector<std::string>> rows;
  std::vector<int> lines;  // 1-based source line per row
};

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ',';
    out += parts[i];
  }
  return out;
}

CsvTable read_csv(const fs::path& path,
                  const std::vector<std::string>& header) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DataError(strformat("cannot open %s", path.string().c_str()));
  CsvTable table;
  std::string line;
  int line_number = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_fields(line);
    if (!have_header) {
      if (fields != header)
        throw DataError(strformat("%s: unknown header '%s', expected '%s'",
                                  path.string().c_str(), line.c_str(),
                                  join(header).c_str()));
      have_header = true;
      continue;
    }
    if (fields.size() != header.size())
      throw DataError(strformat("%s: line %d has %zu fields, expected %zu",
                                path.string().c_str(), line_number,
                                fields.size(), header.size()));
    table.rows.push_back(fields);
    table.lines.push_back(line_number);
  }
  if (!have_header)
    throw DataError(strformat("%s: missing header row, expected '%s'",
                              path.string().c_str(), join(header).c_str()));
  return table;
}

int parse_int(const fs::path& path, int line, const char* column,
              const std::string& field) {
  int value = 0;
  const auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw DataError(strformat("%s: line %d, column '%s': '%s' is not an "
                              "integer",
                              path.string().c_str(), line, column,
                              field.c_str()));
  return value;
}

double parse_num(const fs::path& path, int line, const char* column,
                 const std::string& field) {
  double value = 0.0;
  const auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw DataError(strformat("%s: line %d, column '%s': '%s' is not a "
                              "number",
                              path.string().c_str(), line, column,
                              field.c_str()));
  return value;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw DataError(strformat("cannot write %s", path.string().c_str()));
  return out;
}

std::vector<std::string> flow_header() {
  std::vector<std::string> h{"image_u", "kp_u", "image_v", "kp_v", "spacing"};
  for (int gy = -1; gy <= 1; ++gy) {
    for (int gx = -1; gx <= 1; ++gx) {
      h.push_back(strformat("dx_%d%d", gy, gx));
      h.push_back(strformat("dy_%d%d", gy, gx));
    }
  }
  return h;
}

}  // namespace

std::vector<std::vector<Vec2>> read_keypoints_csv(const fs::path& path) {
  const CsvTable table = read_csv(path, {"image_id", "kp_id", "x", "y"});
  std::map<int, std::map<int, Vec2>> by_image;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const int line = table.lines[r];
    const int image = parse_int(path, line, "image_id", row[0]);
    const int kp = parse_int(path, line, "kp_id", row[1]);
    const double x = parse_num(path, line, "x", row[2]);
    const double y = parse_num(path, line, "y", row[3]);
    if (image < 0 || kp < 0)
      throw DataError(strformat("%s: line %d: negative id",
                                path.string().c_str(), line));
    if (!by_image[image].emplace(kp, Vec2(x, y)).second)
      throw DataError(strformat("%s: line %d: duplicate keypoint (%d, %d)",
                                path.string().c_str(), line, image, kp));
  }
  std::vector<std::vector<Vec2>> out;
  if (by_image.empty()) return out;
  const int num_images = by_image.rbegin()->first + 1;
  out.resize(num_images);
  for (int i = 0; i < num_images; ++i) {
    const auto it = by_image.find(i);
    if (it == by_image.end())
      throw DataError(strformat("%s: image ids are not dense, %d is missing",
                                path.string().c_str(), i));
    const auto& kps = it->second;
    if (kps.rbegin()->first + 1 != static_cast<int>(kps.size()))
      throw DataError(
          strformat("%s: keypoint ids of image %d are not dense",
                    path.string().c_str(), i));
    out[i].reserve(kps.size());
    for (const auto& [kp, p] : kps) out[i].push_back(p);
  }
  return out;
}

void write_keypoints_csv(const fs::path& path,
                         const std::vector<std::vector<Vec2>>& keypoints) {
  std::ofstream out = open_out(path);
  out << "image_id,kp_id,x,y\n";
  for (std::size_t i = 0; i < keypoints.size(); ++i)
    for (std::size_t k = 0; k < keypoints[i].size(); ++k)
      out << i << ',' << k << ',' << format_double(keypoints[i][k].x()) << ','
          << format_double(keypoints[i][k].y()) << '\n';
}

std::vector<PairMatches> read_matches_csv(const fs::path& path,
                                          const std::vector<int>* counts) {
  const CsvTable table =
      read_csv(path, {"image_a", "kp_a", "image_b", "kp_b", "similarity"});
  std::vector<PairMatches> out;
  std::map<std::pair<int, int>, std::size_t> index;
  const auto check = [&](int image, int kp, int line) {
    if (!counts) return;
    if (image < 0 || image >= static_cast<int>(counts->size()) || kp < 0 ||
        kp >= (*counts)[image])
      throw DataError(strformat("%s: line %d: unknown keypoint (%d, %d)",
                                path.string().c_str(), line, image, kp));
  };
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const int line = table.lines[r];
    const int ia = parse_int(path, line, "image_a", row[0]);
    const int ka = parse_int(path, line, "kp_a", row[1]);
    const int ib = parse_int(path, line, "image_b", row[2]);
    const int kb = parse_int(path, line, "kp_b", row[3]);
    const double sim = parse_num(path, line, "similarity", row[4]);
    check(ia, ka, line);
    check(ib, kb, line);
    const auto key = std::make_pair(ia, ib);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, out.size()).first;
      out.push_back(PairMatches{ia, ib, {}});
    }
    out[it->second].matches.emplace_back(ka, kb, sim);
  }
  return out;
}

void write_matches_csv(const fs::path& path,
                       const std::vector<PairMatches>& matches) {
  std::ofstream out = open_out(path);
  out << "image_a,kp_a,image_b,kp_b,similarity\n";
  for (const PairMatches& pair : matches)
    for (const auto& [ka, kb, sim] : pair.matches)
      out << pair.image_a << ',' << ka << ',' << pair.image_b << ',' << kb
          << ',' << format_double(sim) << '\n';
}

std::vector<FlowRecord> read_flows_csv(const fs::path& path) {
  const CsvTable table = read_csv(path, flow_header());
  std::vector<FlowRecord> out;
  out.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const int line = table.lines[r];
    FlowRecord rec;
    rec.image_u = parse_int(path, line, "image_u", row[0]);
    rec.kp_u = parse_int(path, line, "kp_u", row[1]);
    rec.image_v = parse_int(path, line, "image_v", row[2]);
    rec.kp_v = parse_int(path, line, "kp_v", row[3]);
    rec.field.spacing = parse_num(path, line, "spacing", row[4]);
    if (!(rec.field.spacing > 0.0))
      throw DataError(strformat("%s: line %d: spacing must be positive",
                                path.string().c_str(), line));
    int col = 5;
    for (int gy = -1; gy <= 1; ++gy) {
      for (int gx = -1; gx <= 1; ++gx) {
        const double dx = parse_num(path, line, "dx", row[col++]);
        const double dy = parse_num(path, line, "dy", row[col++]);
        rec.field.at(gx, gy) = Vec2(dx, dy);
      }
    }
    out.push_back(rec);
  }
  return out;
}

void write_flows_csv(const fs::path& path, const MatchGraph& graph) {
  std::ofstream out = open_out(path);
  out << join(flow_header()) << '\n';
  for (const MatchEdge& edge : graph.edges) {
    if (!edge.flow) continue;
    const Keypoint& u = graph.nodes[edge.from_node];
    const Keypoint& v = graph.nodes[edge.to_node];
    out << u.image_id << ',' << u.index_in_image << ',' << v.image_id << ','
        << v.index_in_image << ',' << format_double(edge.flow->spacing);
    for (int gy = -1; gy <= 1; ++gy)
      for (int gx = -1; gx <= 1; ++gx)
        out << ',' << format_double(edge.flow->at(gx, gy).x()) << ','
            << format_double(edge.flow->at(gx, gy).y());
    out << '\n';
  }
}

void attach_flows(MatchGraph& graph, const std::vector<FlowRecord>& records) {
  std::unordered_map<std::uint64_t, int> edge_of;
  edge_of.reserve(graph.edges.size());
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const std::uint64_t key =
        (static_cast<std::uint64_t>(
             static_cast<std::uint32_t>(graph.edges[e].from_node))
         << 32) |
        static_cast<std::uint32_t>(graph.edges[e].to_node);
    edge_of.emplace(key, static_cast<int>(e));
  }
  for (const FlowRecord& rec : records) {
    const int u = graph.node_of(rec.image_u, rec.kp_u);
    const int v = graph.node_of(rec.image_v, rec.kp_v);
    const std::uint64_t key = (static_cast<std::uint64_t>(
                                   static_cast<std::uint32_t>(u))
                               << 32) |
                              static_cast<std::uint32_t>(v);
    const auto it = edge_of.find(key);
    if (it == edge_of.end())
      throw DataError(strformat(
          "flow record (%d:%d -> %d:%d) has no matching edge in the graph",
          rec.image_u, rec.kp_u, rec.image_v, rec.kp_v));
    FlowField f = rec.field;
    f.from_node = u;
    f.to_node = v;
    graph.edges[it->second].flow = f;
  }
}

void write_tracks_csv(const fs::path& path, const TrackAssignment& assignment,
                      const ComponentFamily& family) {
  std::ofstream out = open_out(path);
  out << "node_id,track_id,component_id,is_root\n";
  for (std::size_t u = 0; u < assignment.track_of.size(); ++u) {
    const int track = assignment.track_of[u];
    const int component = family.component_of_track.empty()
                              ? -1
                              : family.component_of_track[track];
    const bool root = assignment.root_of[track] == static_cast<int>(u);
    out << u << ',' << track << ',' << component << ',' << (root ? 1 : 0)
        << '\n';
  }
}

void write_refined_csv(const fs::path& path, const MatchGraph& graph,
                       const TrackAssignment& assignment,
                       const ComponentFamily& family) {
  std::ofstream out = open_out(path);
  out << "image_id,kp_id,x0,y0,x,y,track_id,component_id\n";
  for (const Keypoint& kp : graph.nodes) {
    const int track = assignment.track_of[kp.node_id];
    const int component = family.component_of_track.empty()
                              ? -1
                              : family.component_of_track[track];
    out << kp.image_id << ',' << kp.index_in_image << ','
        << format_double(kp.initial_position.x()) << ','
        << format_double(kp.initial_position.y()) << ','
        << format_double(kp.position.x()) << ','
        << format_double(kp.position.y()) << ',' << track << ',' << component
        << '\n';
  }
}

std::map<int, std::vector<QueryHypothesis>> read_query_hypotheses_csv(
    const fs::path& path) {
  const CsvTable table =
      read_csv(path, {"kp_id", "hypothesis_id", "similarity", "dx", "dy"});
  std::map<int, std::map<int, QueryHypothesis>> grouped;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const int line = table.lines[r];
    const int kp = parse_int(path, line, "kp_id", row[0]);
    const int hyp = parse_int(path, line, "hypothesis_id", row[1]);
    const double sim = parse_num(path, line, "similarity", row[2]);
    const double dx = parse_num(path, line, "dx", row[3]);
    const double dy = parse_num(path, line, "dy", row[4]);
    if (!(sim > 0.0))
      throw DataError(strformat("%s: line %d: similarity must be positive",
                                path.string().c_str(), line));
    auto& entry = grouped[kp][hyp];
    entry.hypothesis_id = hyp;
    entry.observations.emplace_back(sim, Vec2(dx, dy));
  }
  std::map<int, std::vector<QueryHypothesis>> out;
  for (auto& [kp, hyps] : grouped)
    for (auto& [id, hyp] : hyps) out[kp].push_back(std::move(hyp));
  return out;
}

void write_refined_queries_csv(
    const fs::path& path, const std::vector<std::tuple<int, int, Vec2>>& rows) {
  std::ofstream out = open_out(path);
  out << "kp_id,hypothesis_id,x,y\n";
  for (const auto& [kp, hyp, p] : rows)
    out << kp << ',' << hyp << ',' << format_double(p.x()) << ','
        << format_double(p.y()) << '\n';
}

void write_pgm(const fs::path& path, const ImageRef& image) {
  std::ofstream out = open_out(path);
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> bytes;
  bytes.reserve(image.pixels.size());
  for (const double v : image.pixels) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    bytes.push_back(static_cast<unsigned char>(std::lround(clamped * 255.0)));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

ImageRef read_pgm(const fs::path& path, int image_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(strformat("cannot open %s", path.string().c_str()));
  const auto next_token = [&]() {
    std::string token;
    int c;
    while ((c = in.get()) != EOF) {
      if (c == '#') {
        while ((c = in.get()) != EOF && c != '\n') {
        }
        continue;
      }
      if (std::isspace(c)) {
        if (!token.empty()) break;
        continue;
      }
      token += static_cast<char>(c);
    }
    return token;
  };
  if (next_token() != "P5")
    throw DataError(strformat("%s: not a binary PGM (P5) file",
                              path.string().c_str()));
  ImageRef img;
  img.image_id = image_id;
  try {
    img.width = std::stoi(next_token());
    img.height = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    if (img.width < 1 || img.height < 1 || maxval != 255)
      throw std::invalid_argument("bad dimensions");
  } catch (const std::exception&) {
    throw DataError(strformat("%s: malformed PGM header",
                              path.string().c_str()));
  }
  std::vector<unsigned char> bytes(static_cast<std::size_t>(img.width) *
                                   img.height);
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw DataError(strformat("%s: truncated PGM payload",
                              path.string().c_str()));
  img.pixels.resize(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i)
    img.pixels[i] = bytes[i] / 255.0;
  return img;
}

void write_homographies_csv(const fs::path& path,
                            const std::vector<Mat3>& views) {
  std::ofstream out = open_out(path);
  out << "view_id,h00,h01,h02,h10,h11,h12,h20,h21,h22\n";
  for (std::size_t i = 0; i < views.size(); ++i) {
    out << i;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out << ',' << format_double(views[i](r, c));
    out << '\n';
  }
}

std::vector<Mat3> read_homographies_csv(const fs::path& path) {
  const CsvTable table =
      read_csv(path, {"view_id", "h00", "h01", "h02", "h10", "h11", "h12",
                      "h20", "h21", "h22"});
  std::vector<Mat3> views(table.rows.size());
  std::vector<bool> seen(table.rows.size(), false);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const int line = table.lines[r];
    const int id = parse_int(path, line, "view_id", row[0]);
    if (id < 0 || id >= static_cast<int>(views.size()) || seen[id])
      throw DataError(strformat("%s: line %d: view ids must be dense and "
                                "unique",
                                path.string().c_str(), line));
    seen[id] = true;
    int col = 1;
    for (int i = 0; i < 3; ++i)
      for (int c = 0; c < 3; ++c)
        views[id](i, c) = parse_num(path, line, "h", row[col++]);
  }
  return views;
}

void write_scene(const fs::path& dir, const SyntheticScene& scene,
                 const std::vector<std::vector<Vec2>>& perturbed) {
  fs::create_directories(dir / "images");
  for (const ImageRef& img : scene.images)
    write_pgm(dir / "images" / strformat("%06d.pgm", img.image_id), img);
  write_homographies_csv(dir / "homographies.csv", scene.views);
  write_keypoints_csv(dir / "keypoints_true.csv", scene.projections);
  write_keypoints_csv(dir / "keypoints_perturbed.csv", perturbed);
}

std::vector<ImageRef> read_images_dir(const fs::path& dir, int count) {
  std::vector<ImageRef> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const fs::path path = dir / strformat("%06d.pgm", i);
    if (!fs::exists(path))
      throw DataError(strformat("expected image file %s for image id %d",
                                path.string().c_str(), i));
    out.push_back(read_pgm(path, i));
  }
  return out;
}

}  // namespace kpref
