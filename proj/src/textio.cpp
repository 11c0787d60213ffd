#include "lve/textio.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

namespace lve {

namespace {

struct Cursor {
  const std::string& text;
  std::size_t pos = 0;
  std::size_t line = 1;
  std::size_t lineStart = 0;

  std::size_t column() const { return pos - lineStart + 1; }
  bool atEnd() const { return pos >= text.size(); }
  char peek() const { return text[pos]; }

  void advance() {
    if (text[pos] == '\n') {
      ++line;
      lineStart = pos + 1;
    }
    ++pos;
  }

  void skipSpacesInLine() {
    while (!atEnd() && (peek() == ' ' || peek() == '\t' || peek() == '\r'))
      advance();
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(line, column(), what);
  }
};

bool isIdentChar(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

std::string readIdent(Cursor& c) {
  c.skipSpacesInLine();
  if (c.atEnd() || !isIdentChar(c.peek())) c.fail("identifier expected");
  std::string out;
  while (!c.atEnd() && isIdentChar(c.peek())) {
    out.push_back(c.peek());
    c.advance();
  }
  return out;
}

bool tryConsume(Cursor& c, char ch) {
  c.skipSpacesInLine();
  if (c.atEnd() || c.peek() != ch) return false;
  c.advance();
  return true;
}

void consume(Cursor& c, char ch) {
  if (!tryConsume(c, ch))
    c.fail(std::string("'") + ch + "' expected");
}

void endOfLine(Cursor& c) {
  c.skipSpacesInLine();
  if (!c.atEnd() && c.peek() == '#')
    while (!c.atEnd() && c.peek() != '\n') c.advance();
  if (!c.atEnd() && c.peek() != '\n') c.fail("end of line expected");
  if (!c.atEnd()) c.advance();
}

// Blank and comment lines between statements.
void skipBlank(Cursor& c) {
  while (!c.atEnd()) {
    std::size_t mark = c.pos;
    c.skipSpacesInLine();
    if (!c.atEnd() && c.peek() == '#') {
      while (!c.atEnd() && c.peek() != '\n') c.advance();
    }
    if (!c.atEnd() && c.peek() == '\n') {
      c.advance();
      continue;
    }
    if (c.atEnd()) return;
    c.pos = mark;  // same line: content follows
    return;
  }
}

bool isLogvarName(const std::string& name) {
  return !name.empty() && std::isupper(static_cast<unsigned char>(name[0]));
}

double readNumber(Cursor& c) {
  c.skipSpacesInLine();
  std::size_t start = c.pos;
  while (!c.atEnd() &&
         (std::isdigit(static_cast<unsigned char>(c.peek())) ||
          c.peek() == '.' || c.peek() == '-' || c.peek() == '+' ||
          c.peek() == 'e' || c.peek() == 'E'))
    c.advance();
  if (start == c.pos) c.fail("number expected");
  try {
    return std::stod(c.text.substr(start, c.pos - start));
  } catch (const std::exception&) {
    c.fail("malformed number");
  }
}

struct ParsedAtom {
  std::string pred;
  std::vector<std::string> terms;
};

ParsedAtom readAtomText(Cursor& c) {
  ParsedAtom a;
  a.pred = readIdent(c);
  consume(c, '(');
  c.skipSpacesInLine();
  if (!tryConsume(c, ')')) {
    while (true) {
      a.terms.push_back(readIdent(c));
      if (tryConsume(c, ')')) break;
      consume(c, ',');
    }
  }
  return a;
}

struct ModelBuilder {
  Model model;

  DomainPtr domain(Cursor& c, const std::string& name) {
    if (auto d = model.findDomain(name)) return d;
    c.fail("unknown domain '" + name + "'");
  }
  PredicatePtr predicate(Cursor& c, const std::string& name) {
    if (auto p = model.findPredicate(name)) return p;
    c.fail("unknown predicate '" + name + "'");
  }
};

void parseDomain(Cursor& c, ModelBuilder& b) {
  std::string name = readIdent(c);
  if (b.model.findDomain(name)) c.fail("domain '" + name + "' redeclared");
  consume(c, '=');
  std::vector<std::string> constants;
  std::string first = readIdent(c);
  c.skipSpacesInLine();
  if (!c.atEnd() && c.peek() == '.') {
    // prefixM..prefixN shorthand
    consume(c, '.');
    consume(c, '.');
    std::string last = readIdent(c);
    auto splitNum = [&](const std::string& s) -> std::pair<std::string, long> {
      std::size_t i = s.size();
      while (i > 0 && std::isdigit(static_cast<unsigned char>(s[i - 1]))) --i;
      if (i == s.size()) c.fail("range endpoints must end in a number");
      return {s.substr(0, i), std::stol(s.substr(i))};
    };
    auto [p1, n1] = splitNum(first);
    auto [p2, n2] = splitNum(last);
    if (p1 != p2 || n2 < n1) c.fail("malformed constant range");
    for (long i = n1; i <= n2; ++i)
      constants.push_back(p1 + std::to_string(i));
  } else {
    constants.push_back(first);
    while (tryConsume(c, ',')) constants.push_back(readIdent(c));
  }
  endOfLine(c);
  try {
    b.model.domains.push_back(makeDomain(name, constants));
  } catch (const StructuralError& e) {
    c.fail(e.what());
  }
}

void parsePredicate(Cursor& c, ModelBuilder& b) {
  std::string name = readIdent(c);
  if (b.model.findPredicate(name))
    c.fail("predicate '" + name + "' redeclared");
  consume(c, '(');
  std::vector<DomainPtr> argDomains;
  c.skipSpacesInLine();
  if (!tryConsume(c, ')')) {
    while (true) {
      argDomains.push_back(b.domain(c, readIdent(c)));
      if (tryConsume(c, ')')) break;
      consume(c, ',');
    }
  }
  consume(c, ':');
  std::vector<std::string> range;
  range.push_back(readIdent(c));
  while (tryConsume(c, ',')) range.push_back(readIdent(c));
  endOfLine(c);
  try {
    b.model.predicates.push_back(makePredicate(name, argDomains, range));
  } catch (const StructuralError& e) {
    c.fail(e.what());
  }
}

struct ArgSyntax {
  bool counting = false;
  std::string countedVar;
  ParsedAtom atom;
};

void parseParfactor(Cursor& c, ModelBuilder& b) {
  // Header: comma-separated args, '|', constraint spec.
  std::vector<ArgSyntax> argSyntax;
  while (true) {
    ArgSyntax a;
    c.skipSpacesInLine();
    if (!c.atEnd() && c.peek() == '#') {
      c.advance();
      a.counting = true;
      a.countedVar = readIdent(c);
      if (!isLogvarName(a.countedVar))
        c.fail("counted logvar must start uppercase");
      consume(c, '[');
      a.atom = readAtomText(c);
      consume(c, ']');
    } else {
      a.atom = readAtomText(c);
    }
    argSyntax.push_back(std::move(a));
    if (!tryConsume(c, ',')) break;
  }
  consume(c, '|');

  // Resolve logvars: name -> LogVar, typed by first use.
  std::map<std::string, LogVar> logvars;
  std::vector<LogVar> order;  // first-occurrence order
  std::vector<ParfactorArg> args;
  for (const auto& a : argSyntax) {
    PredicatePtr pred = b.predicate(c, a.atom.pred);
    if (a.atom.terms.size() != pred->arity())
      c.fail("wrong arity for '" + pred->name() + "'");
    std::vector<Term> terms;
    for (std::size_t p = 0; p < a.atom.terms.size(); ++p) {
      const std::string& tok = a.atom.terms[p];
      const DomainPtr& slot = pred->argDomains()[p];
      if (isLogvarName(tok)) {
        auto it = logvars.find(tok);
        if (it == logvars.end()) {
          LogVar v = LogVar::fresh(tok, slot);
          it = logvars.emplace(tok, v).first;
          order.push_back(v);
        } else if (it->second.domain() != slot) {
          c.fail("logvar '" + tok + "' used with two different domains");
        }
        terms.emplace_back(it->second);
      } else {
        auto idx = slot->indexOf(tok);
        if (!idx) c.fail("'" + tok + "' is not in domain '" + slot->name() + "'");
        terms.emplace_back(*idx);
      }
    }
    try {
      Atom atom(pred, terms);
      if (a.counting) {
        auto it = logvars.find(a.countedVar);
        if (it == logvars.end())
          c.fail("counted logvar '" + a.countedVar +
                 "' does not occur in the atom");
        args.emplace_back(CountingFormula(atom, it->second));
      } else {
        args.emplace_back(std::move(atom));
      }
    } catch (const StructuralError& e) {
      c.fail(e.what());
    }
  }

  // Constraint spec.
  ConstraintTree constraint = ConstraintTree::nullary();
  c.skipSpacesInLine();
  std::size_t mark = c.pos;
  std::string head = order.empty() ? "all" : readIdent(c);
  if (order.empty()) {
    // No logvars: accept (and require) `all`.
    std::string word = readIdent(c);
    if (word != "all") c.fail("'all' expected for a ground parfactor");
  } else if (head == "all" ) {
    constraint = ConstraintTree::fullProduct(order);
  } else if (head == "tuples") {
    std::vector<std::vector<int>> tuples;
    while (true) {
      consume(c, '(');
      std::vector<int> tuple;
      for (std::size_t i = 0; i < order.size(); ++i) {
        if (i) consume(c, ',');
        std::string tok = readIdent(c);
        auto idx = order[i].domain()->indexOf(tok);
        if (!idx)
          c.fail("'" + tok + "' is not in domain '" +
                 order[i].domain()->name() + "'");
        tuple.push_back(*idx);
      }
      consume(c, ')');
      tuples.push_back(std::move(tuple));
      if (!tryConsume(c, ',')) break;
    }
    constraint = ConstraintTree::fromTuples(order, tuples);
  } else {
    // Per-logvar products: VAR in {...} | VAR in all
    c.pos = mark;
    std::map<std::string, std::vector<int>> sets;
    while (true) {
      std::string varName = readIdent(c);
      auto it = logvars.find(varName);
      if (it == logvars.end()) c.fail("unknown logvar '" + varName + "'");
      std::string kw = readIdent(c);
      if (kw != "in") c.fail("'in' expected");
      std::vector<int> values;
      c.skipSpacesInLine();
      if (!c.atEnd() && c.peek() == '{') {
        consume(c, '{');
        while (true) {
          std::string tok = readIdent(c);
          auto idx = it->second.domain()->indexOf(tok);
          if (!idx)
            c.fail("'" + tok + "' is not in domain '" +
                   it->second.domain()->name() + "'");
          values.push_back(*idx);
          if (tryConsume(c, '}')) break;
          consume(c, ',');
        }
      } else {
        std::string word = readIdent(c);
        if (word != "all") c.fail("'all' or '{...}' expected");
        for (std::size_t i = 0; i < it->second.domain()->size(); ++i)
          values.push_back(static_cast<int>(i));
      }
      if (!sets.emplace(varName, values).second)
        c.fail("logvar '" + varName + "' constrained twice");
      if (!tryConsume(c, ',')) break;
    }
    std::vector<std::vector<int>> valueSets;
    for (const auto& v : order) {
      auto it = sets.find(v.name());
      if (it == sets.end())
        c.fail("no constraint for logvar '" + v.name() + "'");
      valueSets.push_back(it->second);
    }
    if (sets.size() != order.size()) c.fail("constraint names unused logvar");
    constraint = ConstraintTree::product(order, valueSets);
  }
  endOfLine(c);

  // Potential rows: one per line until a blank line or a new section.
  std::vector<ArgSpace> spaces;
  try {
    spaces = argSpacesFor(args, constraint);
  } catch (const StructuralError& e) {
    c.fail(e.what());
  }
  std::size_t total = tableSize(spaces);
  std::vector<double> values(total, -1.0);
  for (std::size_t row = 0; row < total; ++row) {
    skipBlank(c);
    if (c.atEnd()) c.fail("missing potential rows");
    std::vector<int> valuation;
    for (std::size_t i = 0; i < args.size(); ++i) {
      const auto& space = spaces[i];
      c.skipSpacesInLine();
      if (space.isCounting()) {
        consume(c, '(');
        Histogram h;
        h.counts.assign(space.rangeSize(), 0);
        std::vector<bool> seen(space.rangeSize(), false);
        while (true) {
          std::string tok = readIdent(c);
          auto idx = args[i].predicate()->rangeIndexOf(tok);
          if (!idx) c.fail("'" + tok + "' is not a range value");
          if (seen[static_cast<std::size_t>(*idx)])
            c.fail("histogram repeats value '" + tok + "'");
          seen[static_cast<std::size_t>(*idx)] = true;
          consume(c, ':');
          h.counts[static_cast<std::size_t>(*idx)] =
              static_cast<int>(readNumber(c));
          if (tryConsume(c, ')')) break;
          consume(c, ',');
        }
        if (h.total() != space.total())
          c.fail("histogram total must be " + std::to_string(space.total()));
        valuation.push_back(space.indexOfHistogram(h));
      } else {
        std::string tok = readIdent(c);
        auto idx = args[i].predicate()->rangeIndexOf(tok);
        if (!idx)
          c.fail("'" + tok + "' is not in the range of '" +
                 args[i].predicate()->name() + "'");
        valuation.push_back(*idx);
      }
    }
    double weight = readNumber(c);
    if (weight < 0) c.fail("potential weights must be nonnegative");
    endOfLine(c);
    Potential probe = Potential::fromValues(spaces, std::vector<double>(total, 0.0),
                                            NumericMode::Linear);
    std::size_t flat = probe.flatten(valuation);
    if (values[flat] >= 0) c.fail("duplicate potential row");
    values[flat] = weight;
  }

  try {
    b.model.parfactors.push_back(Parfactor::make(
        std::move(args),
        Potential::fromValues(spaces, std::move(values), NumericMode::Linear),
        std::move(constraint)));
  } catch (const StructuralError& e) {
    c.fail(e.what());
  }
}

}  // namespace

Model parseModel(const std::string& text) {
  Cursor c{text};
  ModelBuilder b;
  while (true) {
    skipBlank(c);
    if (c.atEnd()) break;
    std::string keyword = readIdent(c);
    if (keyword == "domain")
      parseDomain(c, b);
    else if (keyword == "predicate")
      parsePredicate(c, b);
    else if (keyword == "parfactor")
      parseParfactor(c, b);
    else
      c.fail("'domain', 'predicate' or 'parfactor' expected, got '" +
             keyword + "'");
  }
  return std::move(b.model);
}

std::vector<Observation> parseEvidence(const std::string& text,
                                       const Model& model) {
  Cursor c{text};
  std::vector<Observation> out;
  std::map<std::pair<std::string, std::vector<int>>, int> seen;
  while (true) {
    skipBlank(c);
    if (c.atEnd()) break;
    ParsedAtom a = readAtomText(c);
    PredicatePtr pred = model.findPredicate(a.pred);
    if (!pred) c.fail("unknown predicate '" + a.pred + "'");
    if (a.terms.size() != pred->arity())
      c.fail("wrong arity for '" + a.pred + "'");
    std::vector<int> consts;
    for (std::size_t i = 0; i < a.terms.size(); ++i) {
      if (isLogvarName(a.terms[i]))
        c.fail("evidence atoms must be ground");
      auto idx = pred->argDomains()[i]->indexOf(a.terms[i]);
      if (!idx)
        c.fail("'" + a.terms[i] + "' is not in domain '" +
               pred->argDomains()[i]->name() + "'");
      consts.push_back(*idx);
    }
    consume(c, '=');
    std::string valueTok = readIdent(c);
    auto value = pred->rangeIndexOf(valueTok);
    if (!value)
      c.fail("'" + valueTok + "' is not in the range of '" + a.pred + "'");
    endOfLine(c);
    auto key = std::make_pair(pred->name(), consts);
    auto it = seen.find(key);
    if (it != seen.end()) {
      if (it->second != *value)
        c.fail("conflicting evidence for " +
               GroundAtom{pred, consts}.toString());
      continue;  // harmless duplicate
    }
    seen.emplace(key, *value);
    out.push_back(Observation{pred, consts, *value});
  }
  return out;
}

Query parseQuery(const std::string& text, const Model& model) {
  Cursor c{text};
  skipBlank(c);
  ParsedAtom a = readAtomText(c);
  PredicatePtr pred = model.findPredicate(a.pred);
  if (!pred) c.fail("unknown predicate '" + a.pred + "'");
  if (a.terms.size() != pred->arity()) c.fail("wrong arity for '" + a.pred + "'");
  std::vector<int> consts;
  for (std::size_t i = 0; i < a.terms.size(); ++i) {
    if (isLogvarName(a.terms[i])) c.fail("query atom must be ground");
    auto idx = pred->argDomains()[i]->indexOf(a.terms[i]);
    if (!idx)
      c.fail("'" + a.terms[i] + "' is not in domain '" +
             pred->argDomains()[i]->name() + "'");
    consts.push_back(*idx);
  }
  c.skipSpacesInLine();
  if (!c.atEnd() && c.peek() != '\n') c.fail("single query atom expected");
  return Query{pred, consts};
}

// --- printing -----------------------------------------------------------------

namespace {

std::string formatNumber(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct NamePool {
  std::map<std::uint64_t, std::string> names;
  std::vector<std::string> taken;

  std::string nameFor(const LogVar& v) {
    auto it = names.find(v.id());
    if (it != names.end()) return it->second;
    std::string base = v.name();
    bool ok = !base.empty() &&
              std::isupper(static_cast<unsigned char>(base[0]));
    if (ok)
      ok = std::find(taken.begin(), taken.end(), base) == taken.end();
    if (!ok) {
      int i = 0;
      do {
        base = "V" + std::to_string(i++);
      } while (std::find(taken.begin(), taken.end(), base) != taken.end());
    }
    taken.push_back(base);
    names.emplace(v.id(), base);
    return base;
  }
};

void printAtom(std::ostringstream& os, const Atom& atom, NamePool& pool) {
  os << atom.predicate()->name() << '(';
  for (std::size_t i = 0; i < atom.args().size(); ++i) {
    if (i) os << ',';
    const Term& t = atom.args()[i];
    if (isVar(t))
      os << pool.nameFor(asVar(t));
    else
      os << atom.predicate()->argDomains()[i]->constants()[asConst(t)];
  }
  os << ')';
}

}  // namespace

std::string printModel(const Model& model) {
  std::ostringstream os;
  for (const auto& d : model.domains) {
    os << "domain " << d->name() << " = ";
    for (std::size_t i = 0; i < d->constants().size(); ++i) {
      if (i) os << ", ";
      os << d->constants()[i];
    }
    os << '\n';
  }
  for (const auto& p : model.predicates) {
    os << "predicate " << p->name() << '(';
    for (std::size_t i = 0; i < p->argDomains().size(); ++i) {
      if (i) os << ", ";
      os << p->argDomains()[i]->name();
    }
    os << "): ";
    for (std::size_t i = 0; i < p->range().size(); ++i) {
      if (i) os << ", ";
      os << p->range()[i];
    }
    os << '\n';
  }
  for (const auto& g : model.parfactors) {
    NamePool pool;
    os << "parfactor ";
    for (std::size_t i = 0; i < g->args().size(); ++i) {
      if (i) os << ", ";
      const auto& arg = g->args()[i];
      if (arg.isCounting()) {
        os << '#' << pool.nameFor(arg.counting().countedLogvar()) << '[';
        printAtom(os, arg.atom(), pool);
        os << ']';
      } else {
        printAtom(os, arg.atom(), pool);
      }
    }
    os << " | ";

    const ConstraintTree& c = g->constraint();
    std::vector<LogVar> order;
    for (const auto& arg : g->args())
      for (const auto& v : arg.allLogvars())
        if (std::find(order.begin(), order.end(), v) == order.end())
          order.push_back(v);
    if (order.empty()) {
      os << "all";
    } else {
      // Product constraints print per-logvar sets, everything else tuples.
      std::vector<std::vector<int>> sets;
      bool isProduct = true;
      {
        std::vector<std::vector<int>> projected;
        for (const auto& v : order) {
          std::vector<int> vals;
          for (const auto& t : c.project({v}).tuples()) vals.push_back(t[0]);
          projected.push_back(vals);
        }
        ConstraintTree prod = ConstraintTree::product(order, projected);
        isProduct = c.sameRelation(prod, order, order);
        sets = std::move(projected);
      }
      if (isProduct) {
        for (std::size_t i = 0; i < order.size(); ++i) {
          if (i) os << ", ";
          os << pool.nameFor(order[i]) << " in ";
          if (sets[i].size() == order[i].domain()->size()) {
            os << "all";
          } else {
            os << '{';
            for (std::size_t k = 0; k < sets[i].size(); ++k) {
              if (k) os << ',';
              os << order[i].domain()->constants()[sets[i][k]];
            }
            os << '}';
          }
        }
      } else {
        os << "tuples ";
        auto tuples = c.project(order).tuples();
        std::sort(tuples.begin(), tuples.end());
        for (std::size_t t = 0; t < tuples.size(); ++t) {
          if (t) os << ", ";
          os << '(';
          for (std::size_t i = 0; i < order.size(); ++i) {
            if (i) os << ',';
            os << order[i].domain()->constants()[tuples[t][i]];
          }
          os << ')';
        }
      }
    }
    os << '\n';

    const Potential linear = g->potential().toMode(NumericMode::Linear);
    std::vector<int> valuation;
    for (std::size_t flat = 0; flat < linear.size(); ++flat) {
      linear.unflatten(flat, valuation);
      os << "  ";
      for (std::size_t i = 0; i < g->args().size(); ++i) {
        const auto& space = linear.spaces()[i];
        const auto& pred = g->args()[i].predicate();
        if (i) os << "  ";
        if (space.isCounting()) {
          const Histogram& h = space.histogramAt(valuation[i]);
          os << h.toString(*pred);
        } else {
          os << pred->range()[valuation[i]];
        }
      }
      os << "  " << formatNumber(linear.at(flat)) << '\n';
    }
  }
  return os.str();
}

std::string printEvidence(const std::vector<Observation>& evidence) {
  std::ostringstream os;
  for (const auto& obs : evidence) {
    os << GroundAtom{obs.pred, obs.args}.toString() << " = "
       << obs.pred->range()[obs.value] << '\n';
  }
  return os.str();
}

}  // namespace lve
