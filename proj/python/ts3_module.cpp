#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "ts3/cli.hpp"
#include "ts3/corpus.hpp"
#include "ts3/error.hpp"
#include "ts3/indent_tree.hpp"
#include "ts3/metrics.hpp"
#include "ts3/model.hpp"
#include "ts3/search.hpp"
#include "ts3/tokenizer.hpp"

namespace py = pybind11;

namespace {

py::list tree_nodes(const std::string& code) {
  const ts3::IndentTree tree = ts3::build_tree(code);
  py::list out;
  for (const auto& n : tree.nodes()) {
    py::dict d;
    d["id"] = n.id;
    d["statement"] = n.statement;
    d["indent"] = n.indent_index;
    d["parent"] = n.parent ? py::cast(*n.parent) : py::none();
    d["children"] = n.children;
    out.append(d);
  }
  return out;
}

py::tuple run(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"ts3"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = 0;
  {
    py::gil_scoped_release release;
    code = ts3::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Tree-transformer code summarization and code search";

  py::register_exception<ts3::DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ts3::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ts3::ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ts3::NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def("tokenize_code", [](const std::string& s) { return ts3::tokenize_code(s).tokens; });
  m.def("tokenize_nl", [](const std::string& s) { return ts3::tokenize_nl(s).tokens; });
  m.def("tree_nodes", &tree_nodes, "Indent-tree nodes of a code snippet; node 0 is the root");
  m.def("tree_debug", [](const std::string& code) { return ts3::build_tree(code).debug_string(); });

  m.def("load_corpus", [](const std::filesystem::path& path) {
    std::vector<std::tuple<std::string, std::string, std::string>> rows;
    for (const auto& p : ts3::load_corpus(path)) rows.emplace_back(p.id, p.code, p.comment);
    return rows;
  });
  m.def("split_ids", [](const std::filesystem::path& path, std::uint64_t seed) {
    const auto split = ts3::split_corpus(ts3::load_corpus(path), seed);
    return py::make_tuple(split.train.ids(), split.val.ids(), split.test.ids());
  }, py::arg("path"), py::arg("seed") = 1);

  using Toks = ts3::metrics::Tokens;
  m.def("sentence_bleu", &ts3::metrics::sentence_bleu, py::arg("candidate"), py::arg("reference"), py::arg("n") = 4);
  m.def("corpus_bleu", [](const std::vector<Toks>& c, const std::vector<Toks>& r, std::size_t n) {
    return ts3::metrics::bleu_n(c, r, n);
  }, py::arg("candidates"), py::arg("references"), py::arg("n") = 4);
  m.def("rouge_l", &ts3::metrics::rouge_l, py::arg("candidate"), py::arg("reference"), py::arg("beta") = 1.2);
  m.def("meteor", &ts3::metrics::meteor_lite, py::arg("candidate"), py::arg("reference"));
  m.def("cider", [](const std::vector<Toks>& c, const std::vector<Toks>& r) { return ts3::metrics::cider(c, r); },
        py::arg("candidates"), py::arg("references"));

  py::class_<ts3::Model>(m, "Model")
      .def_static("load", &ts3::Model::load, py::arg("checkpoint"))
      .def("save", &ts3::Model::save, py::arg("dir"))
      .def("summarize", [](const ts3::Model& model, const std::string& code) { return model.summarize(code); })
      .def("encode_query", [](const ts3::Model& model, const std::string& q) { return ts3::encode_query(q, model); });

  py::class_<ts3::SearchIndex>(m, "SearchIndex")
      .def_static("build", [](const std::vector<std::pair<std::string, std::string>>& snippets, const ts3::Model& model) {
        std::vector<ts3::Snippet> s;
        for (const auto& [id, code] : snippets) s.push_back({id, code});
        return ts3::build_index(s, model);
      }, py::arg("snippets"), py::arg("model"))
      .def_static("load", &ts3::SearchIndex::load, py::arg("dir"))
      .def("save", &ts3::SearchIndex::save, py::arg("dir"))
      .def_property("beta", &ts3::SearchIndex::beta, &ts3::SearchIndex::set_beta)
      .def("__len__", &ts3::SearchIndex::size)
      .def("search", [](const ts3::SearchIndex& index, const ts3::Model& model, const std::string& query, std::size_t k) {
        return ts3::rank(ts3::encode_query(query, model), index, {index.beta(), k}).hits;
      }, py::arg("model"), py::arg("query"), py::arg("k") = 10);

  m.def("run_cli", &run, py::arg("args"), "Runs the ts3 tool in-process; returns (exit_code, stdout, stderr)");
}
