#include "pathsentry/as_path.hpp"

#include <algorithm>
#include <charconv>

#include "pathsentry/errors.hpp"

namespace pathsentry {

namespace {

Asn parse_asn(std::string_view text) {
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size() || value > 0xFFFFFFFFull) {
    throw DataError("bad ASN '" + std::string(text) + "'");
  }
  return static_cast<Asn>(value);
}

}  // namespace

PathElement PathElement::set(std::vector<Asn> asns) {
  if (asns.empty()) throw DataError("empty AS set");
  std::sort(asns.begin(), asns.end());
  asns.erase(std::unique(asns.begin(), asns.end()), asns.end());
  return {std::move(asns), true};
}

bool PathElement::contains(Asn asn) const {
  return std::binary_search(members.begin(), members.end(), asn);
}

AsPath::AsPath(std::initializer_list<Asn> asns) {
  for (Asn a : asns) elements.push_back(PathElement::single(a));
}

AsPath parse_as_path(std::string_view text) {
  AsPath path;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == ' ') {
      ++i;
      continue;
    }
    auto end = text.find(' ', i);
    if (end == std::string_view::npos) end = text.size();
    auto token = text.substr(i, end - i);
    if (token.front() == '{') {
      if (token.back() != '}' || token.size() < 3) {
        throw DataError("malformed AS set '" + std::string(token) + "'");
      }
      std::vector<Asn> members;
      auto body = token.substr(1, token.size() - 2);
      std::size_t j = 0;
      while (j <= body.size()) {
        auto comma = body.find(',', j);
        if (comma == std::string_view::npos) comma = body.size();
        members.push_back(parse_asn(body.substr(j, comma - j)));
        j = comma + 1;
      }
      path.elements.push_back(PathElement::set(std::move(members)));
    } else {
      path.elements.push_back(PathElement::single(parse_asn(token)));
    }
    i = end;
  }
  if (path.empty()) throw DataError("empty AS path");
  return path;
}

std::string format_as_path(const AsPath& path) {
  std::string out;
  for (const auto& e : path.elements) {
    if (!out.empty()) out += ' ';
    if (e.is_set) {
      out += '{';
      for (std::size_t k = 0; k < e.members.size(); ++k) {
        if (k) out += ',';
        out += std::to_string(e.members[k]);
      }
      out += '}';
    } else {
      out += std::to_string(e.front());
    }
  }
  return out;
}

nlohmann::json path_to_json(const AsPath& path) {
  auto arr = nlohmann::json::array();
  for (const auto& e : path.elements) {
    if (e.is_set) {
      arr.push_back(e.members);
    } else {
      arr.push_back(e.front());
    }
  }
  return arr;
}

AsPath path_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw DataError("AS path must be a non-empty array");
  AsPath path;
  for (const auto& item : j) {
    if (item.is_number_unsigned()) {
      path.elements.push_back(PathElement::single(item.get<Asn>()));
    } else if (item.is_array()) {
      path.elements.push_back(PathElement::set(item.get<std::vector<Asn>>()));
    } else {
      throw DataError("AS path item must be an integer or an array");
    }
  }
  return path;
}

}  // namespace pathsentry
