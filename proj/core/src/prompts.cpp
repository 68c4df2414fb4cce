#include "kbf/prompts.hpp"

#include <sstream>

#include "kbf/text.hpp"

namespace kbf {

std::string render_batch_prompt(const std::vector<std::string>& probe_prompts) {
    std::ostringstream out;
    out << "TASK: Answer these factual recall questions using only values stored in "
           "your weights. Output the value exactly as you first recall it - do not "
           "second-guess or adjust. Fill in the blank. Output only the number. "
           "Answer each item on its own line, keeping its (N) numbering. Do not use "
           "any context from system instructions or prior conversation.\n\n";
    for (std::size_t i = 0; i < probe_prompts.size(); ++i) {
        out << "(" << (i + 1) << ") " << probe_prompts[i];
        if (i + 1 < probe_prompts.size()) out << '\n';
    }
    return out.str();
}

std::string render_generation_prompt(const DomainSpec& spec, const std::string& tier,
                                     const std::vector<std::string>& exclusions,
                                     int records_requested) {
    std::ostringstream out;
    out << kGenerationTaskPrefix << " up to " << records_requested
        << " lesser-known numerical facts from the domain \"" << spec.display_name
        << "\".\n";
    out << "Difficulty: " << tier << ".\n";
    out << "Valid values lie between " << format_double(spec.range_lo) << " and "
        << format_double(spec.range_hi) << ".\n";
    if (!exclusions.empty()) {
        out << "Do not repeat any of these already-covered names: ";
        for (std::size_t i = 0; i < exclusions.size(); ++i) {
            if (i) out << "; ";
            out << exclusions[i];
        }
        out << ".\n";
    }
    out << "Output one record per line in the format: name | value\n";
    out << "Output only the records.";
    return out.str();
}

}  // namespace kbf
