#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "voxmend/agc.hpp"
#include "voxmend/checkpoint.hpp"
#include "voxmend/degrade.hpp"
#include "voxmend/dsp/stft.hpp"
#include "voxmend/dsp/wav.hpp"
#include "voxmend/error.hpp"
#include "voxmend/filterbank/pqmf.hpp"
#include "voxmend/pipeline.hpp"

namespace py = pybind11;
using namespace voxmend;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using ComplexArray = py::array_t<std::complex<float>, py::array::c_style | py::array::forcecast>;

dsp::Waveform to_wave(const FloatArray& a) {
  if (a.ndim() != 1) throw py::value_error("expected a 1-D float array");
  return dsp::Waveform(std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> to_array(const std::vector<float>& v) {
  py::array_t<float> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::array_t<float> to_array(const dsp::Waveform& w) { return to_array(w.samples); }

py::array_t<std::complex<float>> spec_array(const dsp::ComplexSpectrogram& s) {
  py::array_t<std::complex<float>> out({static_cast<py::ssize_t>(s.frames), static_cast<py::ssize_t>(s.bins)});
  std::copy(s.data.begin(), s.data.end(), out.mutable_data());
  return out;
}

dsp::ComplexSpectrogram to_spec(const ComplexArray& a) {
  if (a.ndim() != 2) throw py::value_error("expected a frames x bins complex array");
  dsp::ComplexSpectrogram s(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), s.data.begin());
  return s;
}

}  // namespace

PYBIND11_MODULE(_voxmend, m) {
  m.doc() = "48 kHz speech restoration and enhancement toolkit";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<UnsupportedFormatError>(m, "UnsupportedFormatError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  m.attr("SAMPLE_RATE") = dsp::kSampleRate;

  m.def("read_wav", [](const std::filesystem::path& p) { return to_array(dsp::read_wav(p)); }, py::arg("path"));
  m.def("write_wav", [](const std::filesystem::path& p, const FloatArray& x) { dsp::write_wav(p, to_wave(x)); },
        py::arg("path"), py::arg("samples"));

  m.def("stft", [](const FloatArray& x) { return spec_array(dsp::stft(to_wave(x), dsp::StftConfig::standard())); },
        py::arg("samples"), "960-point periodic Hann STFT, hop 480: frames x 481 complex.");
  m.def("istft",
        [](const ComplexArray& s, std::optional<std::size_t> length) {
          return to_array(dsp::istft(to_spec(s), dsp::StftConfig::standard(), length));
        },
        py::arg("spec"), py::arg("length") = py::none());

  m.def("pqmf_analyze",
        [](const FloatArray& x, std::size_t bands) { return fb::pqmf_analyze(to_wave(x), fb::PqmfBank(bands)); },
        py::arg("samples"), py::arg("bands") = 4);
  m.def("pqmf_synthesize",
        [](const fb::Subbands& s, std::size_t bands) { return to_array(fb::pqmf_synthesize(s, fb::PqmfBank(bands))); },
        py::arg("subbands"), py::arg("bands") = 4);
  m.def("pqmf_group_delay", [](std::size_t bands) { return fb::PqmfBank(bands).group_delay(); }, py::arg("bands") = 4);

  m.def("agc",
        [](const FloatArray& x, double smoothing) {
          agc::AgcState st;
          st.smoothing_coeff = smoothing;
          return to_array(agc::process(to_wave(x), st));
        },
        py::arg("samples"), py::arg("smoothing") = agc::kDefaultSmoothing);

  m.def("simulate_rir",
        [](std::array<double, 3> dims, std::array<double, 3> source, std::array<double, 3> mic, double beta, int order) {
          sim::RoomSpec r;
          r.dims = dims;
          r.source = source;
          r.mic = mic;
          r.beta.fill(beta);
          r.max_order = order;
          return to_array(sim::simulate_rir(r));
        },
        py::arg("dims"), py::arg("source"), py::arg("mic"), py::arg("beta") = 0.9, py::arg("max_order") = 20);
  m.def("mix_at_snr",
        [](const FloatArray& c, const FloatArray& n, double snr) { return to_array(sim::mix_at_snr(to_wave(c), to_wave(n), snr)); },
        py::arg("clean"), py::arg("noise"), py::arg("snr_db"));
  m.def("lowpass", [](const FloatArray& x, double fc) { return to_array(sim::lowpass(to_wave(x), fc)); },
        py::arg("samples"), py::arg("cutoff_hz"));
  m.def("packet_loss",
        [](const FloatArray& x, double rate, double burst, std::uint64_t seed) {
          std::mt19937_64 rng(seed);
          return to_array(sim::packet_loss(to_wave(x), rate, burst, rng));
        },
        py::arg("samples"), py::arg("rate"), py::arg("burst_mean_frames") = 2.0, py::arg("seed") = 0);
  m.def("codec_surrogate",
        [](const FloatArray& x, const std::string& level) {
          return to_array(sim::codec_surrogate(to_wave(x), sim::parse_codec_level(level)));
        },
        py::arg("samples"), py::arg("level"));
  m.def("sample_recipe", [](std::uint64_t seed) { return sim::recipe_to_json(sim::sample_recipe(seed)); }, py::arg("seed"));
  m.def("simulate_pair",
        [](const FloatArray& clean, const FloatArray& noise, const std::string& recipe) {
          auto p = sim::simulate_pair(to_wave(clean), to_wave(noise), sim::recipe_from_json(recipe));
          return py::make_tuple(to_array(p.degraded), to_array(p.target));
        },
        py::arg("clean"), py::arg("noise"), py::arg("recipe_json"), "Returns (degraded, target).");

  m.def("read_checkpoint",
        [](const std::filesystem::path& p) {
          py::dict out;
          for (const auto& t : read_checkpoint(p)) {
            std::vector<py::ssize_t> shape(t.dims.begin(), t.dims.end());
            py::array_t<float> a(shape);
            std::copy(t.data.begin(), t.data.end(), a.mutable_data());
            out[py::str(t.name)] = a;
          }
          return out;
        },
        py::arg("path"));
  m.def("write_checkpoint",
        [](const std::filesystem::path& p, const py::dict& tensors) {
          std::vector<NamedTensor> out;
          for (const auto& [k, v] : tensors) {
            auto a = py::cast<FloatArray>(v);
            NamedTensor t;
            t.name = py::cast<std::string>(k);
            for (py::ssize_t i = 0; i < a.ndim(); ++i) t.dims.push_back(static_cast<std::uint32_t>(a.shape(i)));
            t.data.assign(a.data(), a.data() + a.size());
            out.push_back(std::move(t));
          }
          write_checkpoint(p, out);
        },
        py::arg("path"), py::arg("tensors"));

  namespace pl = pipeline;
  py::class_<pl::PipelineConfig>(m, "PipelineConfig")
      .def(py::init<>())
      .def_static("parse", [](const std::string& text) { return pl::PipelineConfig::parse(text); }, py::arg("text"))
      .def_static("load", &pl::PipelineConfig::load, py::arg("path"))
      .def_readwrite("generator_checkpoint", &pl::PipelineConfig::generator_checkpoint)
      .def_readwrite("taer_checkpoint", &pl::PipelineConfig::taer_checkpoint)
      .def_readwrite("unet_checkpoint", &pl::PipelineConfig::unet_checkpoint)
      .def_readwrite("agc", &pl::PipelineConfig::agc)
      .def_readwrite("seed", &pl::PipelineConfig::seed)
      .def_readwrite("generator_channels", &pl::PipelineConfig::generator_channels)
      .def_readwrite("enhancement_channels", &pl::PipelineConfig::enhancement_channels)
      .def_property(
          "stage", [](const pl::PipelineConfig& c) { return pl::to_string(c.stage); },
          [](pl::PipelineConfig& c, const std::string& s) { c.stage = pl::parse_stage(s); })
      .def("to_text", &pl::PipelineConfig::to_text);

  py::class_<pl::RtfReport>(m, "RtfReport")
      .def_readonly("audio_seconds", &pl::RtfReport::audio_seconds)
      .def_readonly("wall_seconds", &pl::RtfReport::wall_seconds)
      .def_readonly("rtf", &pl::RtfReport::rtf)
      .def_readonly("thread_count", &pl::RtfReport::thread_count)
      .def_property_readonly("stages",
                             [](const pl::RtfReport& r) {
                               py::dict d;
                               for (const auto& s : r.stages) d[py::str(s.name)] = s.seconds;
                               return d;
                             });

  py::class_<pl::Pipeline>(m, "Pipeline")
      .def(py::init<const pl::PipelineConfig&>(), py::arg("config") = pl::PipelineConfig{})
      .def("process",
           [](const pl::Pipeline& p, const FloatArray& x) {
             const auto in = to_wave(x);
             dsp::Waveform out;
             {
               py::gil_scoped_release release;
               out = p.process(in);
             }
             return to_array(out);
           },
           py::arg("samples"))
      .def("process_streaming", [](const pl::Pipeline& p, const FloatArray& x) {
        return to_array(pl::process_streaming(p, to_wave(x)));
      }, py::arg("samples"))
      .def_property_readonly_static("latency", [](py::object) { return pl::Pipeline::latency(); });

  m.def("benchmark_rtf", &pl::benchmark_rtf, py::arg("config"), py::arg("seconds") = 10.0, py::arg("seed") = 0);
  m.def("enhance_file", &pl::enhance_file, py::arg("in_path"), py::arg("out_path"), py::arg("config"),
        py::arg("streaming") = false);
}
