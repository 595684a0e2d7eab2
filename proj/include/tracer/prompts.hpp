#pragma once

#include <string>
#include <string_view>

#include "tracer/corpus.hpp"
#include "tracer/errors.hpp"

namespace tracer {

namespace prompts {

// Stage I template. {original_description} is the only substitution point;
// the two in-context examples are fixed.
inline constexpr std::string_view normalization_template =
    R"PROMPT(Instruction
Carefully read the programming task and the examples provided. Then rephrase the original task description into clean and concise ones. Make sure the rephrased task description follow the style and length of rephrased ones provided in the examples. Directly return the rephrased task description.

Example 1
Original Task Description
You are tasked with implementing a function to convert an image wrapper to a OpenGL texture. The image wrapper is a data structure that holds image data, and the OpenGL texture is a representation of the image suitable for rendering in an OpenGL environment.
Rephrased Task Description
Implement a method that converts an image wrapper containing image data into a texture suitable for rendering in an OpenGL environment. The method should handle data formatting and texture creation within a properly initialized OpenGL context, ensuring correctness and efficiency.

Example 2
Original Task Description
Write a function to find the maximum value in record list as tuple attribute in the given tuple list.
Rephrased Task Description
Implement a method that processes a list of tuples and returns the maximum value found among a specific attribute within each tuple. The method should correctly extract and compare values to determine the highest one.

Task
Original Task Description
{original_description}
Rephrased Task Description
[New description here])PROMPT";

// Stage III template. Benchmark task is always Task A, training task Task B.
inline constexpr std::string_view verification_template =
    R"PROMPT(Instruction
1. You will see two tasks: Task A and Task B.
2. Read both carefully, noting their goals, inputs/outputs, and logic.
3. Choose the single most accurate relationship from the categories below.

Relationship Categories
A. Functionally Identical
Choose this if the tasks are perfect duplicates. They accomplish the exact same goal, take the same kinds of input, and produce the same kinds of output. They are essentially two descriptions of the very same problem.
Litmus Test: Could the solution for one task solve the other with zero changes? If yes, choose A. Otherwise, do NOT choose A.

B. Nearly Identical (Variation of the Same Problem)
Choose this if the tasks solve the same fundamental problem, but differ only in minor surface details, but share all the same core logic. They solve the same fundamental problem, but with minor differences in constraints, data types, or input/output formats.
Litmus Test: If the tasks are not perfectly identical (A fails), but the **core logic is identical**, choose B. If the core logic differs, do NOT choose B.

C. Shared Logic (Different Problems, Same Algorithm)
Choose this if the tasks solve different problems using the same algorithmic method. The tasks have different goals and may come from unrelated domains, but they are solved using the same core algorithm or logical procedure.
Litmus Test: If neither A nor B applies, but the algorithmic approach is the same, choose C. If the algorithm differs, do NOT choose C.

D. Unrelated or Different Domain
Choose this if the tasks do not share the same algorithmic logic. This includes two cases:
The tasks are from the same general domain (e.g., both deal with arrays or graphs) but require different algorithms or solution methods.
The tasks are completely unrelated --- they have no meaningful conceptual, logical, or domain connection.
Litmus Test: If none of A, B, or C applies, choose D.

Examples
Example 1
Task A:
Determine if a given string is a palindrome, returning True if it reads the same backward as forward.
Task B:
Implement a method in Ruby that determines whether a given string is a palindrome.
Answer: A

Example 2
Task A:
Generate a space-delimited string of numbers starting from 0 up to n inclusive.
Task B:
Implement a C++ function to print the numbers from 0 to n in ascending order.
Answer: B

Example 3
Task A:
Given an array of integers and a positive integer k, return a sorted list of the k largest numbers in the array.
Task B:
Implement a function to identify the two largest numbers in an array and return them in descending order.
Answer: C

Example 4
Task A:
Determine if any two numbers in the given list are closer to each other than a specified threshold.
Task B:
Given a sorted integer array and two integers k and x, return the k closest integers to x, sorted in ascending order. An integer is considered closer to x if it has a smaller absolute difference, or the same difference but is smaller in value.
Answer: D

Example 5
Task A:
Determine if any two numbers in the given list are closer to each other than a specified threshold.
Task B:
Given an integer array nums, count the elements that have both a strictly smaller and a strictly greater element in the array.
Answer: D

Input Tasks
Task A. {description1}
Task B. {description2}

Output Requirements
Format your answer exactly as follows:
Answer: [A, B, C, or D])PROMPT";

// Stage IV template. {task description} is the single substitution point.
inline constexpr std::string_view screening_template =
    R"PROMPT(Instruction
You will be shown one task description. Your job is to assess whether it describes a basic helper function.

Definition
A basic helper function is:
1. Primitive and atomic --- performs a single, irreducible operation.
2. Scalar/boolean output --- returns only a simple scalar or trivial boolean (not a composite structure).
3. Built-in equivalent --- typically maps to a single built-in or standard library function (e.g., abs(x), len(list), max(array)).
4. Subroutine nature --- commonly used as a small sub-step inside larger algorithms.

Litmus Tests (all must be satisfied for "Yes")
- Built-in mapping: Does it directly correspond to a built-in/standard library call?
- Subroutine usage: Is it normally a utility step within larger problems?
- Atomic simplicity: Does it avoid extra selection, indexing, or multi-step logic?

Decision Rule
- Yes: All three tests pass.
- No: Any test fails.

Output Requirements
Format your answer exactly as follows:

Decision: Yes | No
Reasoning: (3--4 sentences explaining which tests pass or fail, focusing on atomic simplicity, built-in mapping, and subroutine usage.)

Task
{task description})PROMPT";

// Placeholder substitution with no re-interpretation of the inserted text.
inline std::string substitute(std::string_view tmpl, std::string_view placeholder,
                              std::string_view value) {
    auto pos = tmpl.find(placeholder);
    if (pos == std::string_view::npos) {
        throw error("prompt template is missing placeholder '" + std::string(placeholder) + "'");
    }
    std::string out;
    out.reserve(tmpl.size() + value.size());
    out.append(tmpl.substr(0, pos));
    out.append(value);
    out.append(tmpl.substr(pos + placeholder.size()));
    return out;
}

// Two-slot variant: both positions are located in the template before any
// splicing, so placeholder-shaped text inside the values is left alone.
inline std::string substitute2(std::string_view tmpl, std::string_view ph1,
                               std::string_view v1, std::string_view ph2,
                               std::string_view v2) {
    auto pos1 = tmpl.find(ph1);
    auto pos2 = tmpl.find(ph2);
    if (pos1 == std::string_view::npos || pos2 == std::string_view::npos || pos2 < pos1) {
        throw error("prompt template placeholders are missing or out of order");
    }
    std::string out;
    out.reserve(tmpl.size() + v1.size() + v2.size());
    out.append(tmpl.substr(0, pos1));
    out.append(v1);
    out.append(tmpl.substr(pos1 + ph1.size(), pos2 - pos1 - ph1.size()));
    out.append(v2);
    out.append(tmpl.substr(pos2 + ph2.size()));
    return out;
}

}  // namespace prompts

inline std::string render_normalization_prompt(const Task& task) {
    if (trim_copy(task.description).empty()) {
        throw data_error("normalization prompt: task description is empty");
    }
    return prompts::substitute(prompts::normalization_template, "{original_description}",
                               task.description);
}

// Benchmark description goes in slot A, training description in slot B; the
// fixed orientation keeps the response cache effective.
inline std::string render_verification_prompt(std::string_view benchmark_text,
                                              std::string_view training_text) {
    if (trim_copy(benchmark_text).empty() || trim_copy(training_text).empty()) {
        throw data_error("verification prompt: empty task description");
    }
    return prompts::substitute2(prompts::verification_template, "{description1}",
                                benchmark_text, "{description2}", training_text);
}

inline std::string render_screening_prompt(std::string_view task_text) {
    if (trim_copy(task_text).empty()) {
        throw data_error("screening prompt: empty task description");
    }
    return prompts::substitute(prompts::screening_template, "{task description}", task_text);
}

}  // namespace tracer
