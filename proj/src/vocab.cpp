#include "kae/vocab.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

namespace kae {

Vocabulary Vocabulary::build(const std::vector<std::string>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("build_vocabulary: empty corpus");
  std::set<char> seen;
  for (const auto& s : corpus)
    for (char c : s) seen.insert(c);
  std::string chars(seen.begin(), seen.end());
  return from_chars(chars);
}

Vocabulary Vocabulary::from_chars(const std::string& chars) {
  Vocabulary v;
  v.chars_ = chars;
  int id = 0;
  for (char c : chars) {
    if (v.char_to_id_.count(c))
      throw std::invalid_argument("vocabulary: duplicate character");
    v.char_to_id_[c] = id++;
  }
  v.sos_id_ = id++;
  v.eos_id_ = id++;
  v.pad_id_ = id++;
  v.size_ = id;
  return v;
}

bool Vocabulary::has_char(char c) const { return char_to_id_.count(c) > 0; }

int Vocabulary::id_of(char c) const {
  auto it = char_to_id_.find(c);
  if (it == char_to_id_.end())
    throw std::invalid_argument(std::string("vocabulary: unknown character '") +
                                c + "'");
  return it->second;
}

char Vocabulary::char_of(int id) const {
  if (id < 0 || id >= static_cast<int>(chars_.size()))
    throw std::invalid_argument("vocabulary: id has no character");
  return chars_[static_cast<size_t>(id)];
}

TokenSequence tokenize(const std::string& s, const Vocabulary& v) {
  TokenSequence t;
  t.ids.reserve(s.size() + 2);
  t.ids.push_back(v.sos_id());
  for (size_t i = 0; i < s.size(); ++i) {
    if (!v.has_char(s[i])) {
      std::ostringstream os;
      os << "tokenize: unknown character '" << s[i] << "' at position " << i;
      throw std::invalid_argument(os.str());
    }
    t.ids.push_back(v.id_of(s[i]));
  }
  t.ids.push_back(v.eos_id());
  t.length = static_cast<int>(t.ids.size());
  return t;
}

std::string detokenize_ids(const std::vector<int>& ids, const Vocabulary& v) {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= v.size())
      throw std::invalid_argument("detokenize: id out of range");
    if (id == v.sos_id() || id == v.eos_id() || id == v.pad_id()) continue;
    out.push_back(v.char_of(id));
  }
  return out;
}

std::string detokenize(const TokenSequence& t, const Vocabulary& v) {
  return detokenize_ids(t.ids, v);
}

PaddedBatch pad_batch(const std::vector<TokenSequence>& seqs, int max_len,
                      const Vocabulary& v) {
  PaddedBatch b;
  b.batch = static_cast<int>(seqs.size());
  b.max_len = max_len;
  b.ids.assign(static_cast<size_t>(b.batch) * max_len, v.pad_id());
  b.pad_mask = Array({b.batch, max_len});
  for (int i = 0; i < b.batch; ++i) {
    const auto& ids = seqs[static_cast<size_t>(i)].ids;
    if (static_cast<int>(ids.size()) > max_len) {
      std::ostringstream os;
      os << "pad_batch: sequence length " << ids.size() << " exceeds max_len "
         << max_len;
      throw std::invalid_argument(os.str());
    }
    for (size_t j = 0; j < ids.size(); ++j)
      b.ids[static_cast<size_t>(i) * max_len + j] = ids[j];
    for (int j = static_cast<int>(ids.size()); j < max_len; ++j)
      b.pad_mask.data[static_cast<size_t>(i) * max_len + j] = 1.0;
  }
  return b;
}

}  // namespace kae
