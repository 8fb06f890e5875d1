"""Wire prompt templates and their renderers.

The fixed skeleton portions are part of the external interface and must stay
byte-stable; renderers only substitute the declared placeholders and append
dynamic sections at the end.
"""

from __future__ import annotations

import json
from string import Template
from typing import Any

from .schema import SchemaDoc, canonical_serialize

BASE_EXTRACTION_TEMPLATE = Template(
    """You are an attribute extractor whose task is to extract the value for the given
attributes from the user input.

<attributes>
$attribute_schema
</attributes>

Things to keep in mind:
1. An attribute can be a complex attribute, meaning, it can have multiple
attributes nested within it.
If an attribute is a complex attribute, then all attributes in it are
related to one another and the values must be extracted accordingly.
2. You have to return the attribute values within <attribute_values>
</attribute_values> in the following format:
$attribute_val_format

Steps to follow to extract the values are as follows:
<steps>
1. Identify the required attribute: Identify the attributes mentioned in
<attributes></attributes> and focus on one attribute at a time.
2. If a condition is mentioned along with an attribute, then carefully
follow the condition and extract only that value which satisifies the condition.
4. Handle uncertain/missing/false-condtion values: If the value for a required
attribute is missing or if you are not sure about the value of a required attribute
or if no value satisfies the condition, set the value as `null`.
Do not assume any value for any attribute or do not give values for which
the condition is false.
5. Repeat the above steps for each attribute.
</steps>

Before giving your final answer, think about the information which is
relevant for constructing your answer within <thinking></thinking> XML tags.
Then, Put your final answer within <attribute_values></attribute_values> XML tags.
Mention how you conclude on your answer. Answer should be aligned with what's
inside <thinking> tags.

Extract the values step-by-step using the steps mentioned in <steps></steps>

Put your response in the following format only:
<response>
<thinking></thinking>
<attribute_values></attribute_values>
</response>

Below is the conversation with latest user message at the end:
"""
)

SCHEMA_GENERATOR_TEMPLATE = Template(
    """You are a specialized schema generation agent that creates precise schemas for information extraction.

The contract must be a valid json schema.

The contracts must strictly adhere to a json format.

Task description: $task
Use the task description to understand:
- What variables should be included in the schema
- Their data types and structures
- Any constraints or patterns they follow

Please generate the following:
1. A json schema that is optimal for extracting values of attributes mentioned in the schema.
A schema is considered optimal for extraction if it necessarily fulfills the following conditions:

1. The generated schema must be as concise as possible. This is important to
ensure least latency for downstream extraction.
2. The schema must contain non-conflicting attributes which are non-ambiguous
and do not cause any confusion while performing extraction.
This can be achieved through:
a) Coming up with dis-similar names to prevent any confusion
b) Creating clear descriptions for the attribute
c) Creating conditions, rules wherever necessary

Requirements:
- Follow the json format strictly. Keep it as simple as possible.
- Include clear descriptions for each attribute
- Add proper constraints (e.g., required fields, patterns, length, enums)
where appropriate
- Consider edge cases and error scenarios
- Use appropriate data types optimized for the use case

Do NOT add any extra attributes apart from the ones mentioned in the task description
First, analyze the task thoroughly in <thinking></thinking> tags, considering:
- What attributes are needed to complete the task?
- What constraints or validations apply?
- What types best represent each piece of data?
- Are there any optional parameters to consider?
Return your generated schema in <json_schema></json_schema> tags.
"""
)

SYNTHETIC_DATA_TEMPLATE = Template(
    """You are an expert in creating challenging datasets that expose flaws in attribute extraction systems.
Your task is to generate diverse, edge-case rich examples that will thoroughly test
and potentially break a JSON schema-based attribute extraction system.
User provided json schema: $schema
The user defined the attribute extraction task as: $task
## Instructions
1. I will provide you with a JSON schema that defines attributes to be extracted.
2. Analyze this schema carefully to identify potential weaknesses, edge cases, and ambiguities.
3. Generate a comprehensive dataset of examples designed to challenge the extraction system.
4. For each example, provide:
   - Input text containing the information to be extracted
   - Expected output (what the correct extraction should be, You can give an
   empty output as well whenever required)
      - If all required fields in the schema are not present, the ground truth
      should be empty
   - Description of why this example is challenging
5. Consider creating multiple message conversations with back and forth
between USER and ASSISTANT to make the dataset more complex.
Think hard before generating your samples. Include your thinking
in <thinking></thinking> tags.
## Guidelines for Creating Adversarial Examples
Create examples that target these vulnerabilities:
1. **Contextual ambiguity**:
   - Multiple potential matches for the same attribute
   - Contradictory information
   - Attribute values embedded in complex sentences
2. **Structural challenges**:
   - Nested information
   - Lists containing relevant attributes
   - Tabular data represented in text
3. **Semantic traps**:
   - Similar but incorrect values
   - Information that appears to match the schema but doesn't
   - Deliberate misinformation or red herrings
4. **Linguistic complexity**:
   - Jargon and domain-specific terminology
   - Colloquial expressions of values
   - Indirect references
5. **Error conditions**:
   - Malformed inputs
   - Missing required attributes
   - Data type mismatches
Create samples where the current schema is not sufficient to handle the input,
then give ground truth as "INSUFFICIENT_SCHEMA".
## Output Format
For each generated example, structure your output as follows:
<example>
### Example [number]
<input_text>
</input_text>
<ground_truth>
{
  "attribute1": "value1",
  ...
}
</ground_truth>

<challenge> [boundary case/ambiguity/etc.] </challenge>
</example>
Generate atleast TEN diverse and challenging examples based on the provided
schema, each targeting different vulnerabilities.

You can use the following user provided samples: $user_samples
"""
)

SCHEMA_REFINER_TEMPLATE = Template(
    """You are a schema refinement agent specializing in improving JSON schemas for attribute extraction tasks.
Your goal is to analyze evaluation results and modify the schema to prevent failure
cases while maintaining accuracy on successful extractions.
1. Task which the json schema should be based on: $task
2. The original JSON schema: $schema
3. A set of evaluation samples containing: $eval_samples
For your context, the schema will be passed to the following tool to perform
extraction:
- The tool uses a json schema and passes it to a LLM agent
- This schema defines attributes and their inter-dependent relationships
- The schema contains information about each attribute that has to be extracted
from an unstructured context.
- The LLM agent fills the schema with the relevant values from the context
- The agent also has validation guardrails (applied in the same order):
1. missing attribute check - which checks if the required attributes in the
json schema are missing from the user provided input context or not.
2. Grounding - which checks if the values predicted are present in the
context or not.
3. rules mismatch - which checks if the attribute value adheres to the
specified rules: which can be minLength, maxLength, enums, regex patterns
Analyze the success and failure patterns to propose a refined schema that
addresses the issues identified.
You can change the entire structure of the schema if you think there is a
more optimal approach as well.
The contracts must strictly adhere to a json format. You can only use the following
fields for an attirbute in the schema:
[name, description, type, enum, properties, title, pattern,
minLength, maxLength, condition].
You CANNOT USE these keys: if, else, anyof, allof.
Grounding of dates happen through LLM based prompting to handle different
prompts if each date attribute has the following fiels in it:
"date": {
   "allowed_date_formats": [
      "MM/DD/YYYY"
   ],
   "delimiter": "/"
}
"condition" key in the schema should contain a natural language condition only.
Do NOT add any extra attributes apart from the ones mentioned in the
task description
## Output Format
Present your analysis and solution as follows:
<failure_analysis>
[Detailed analysis of failure patterns observed in the evaluation samples]
</failure_analysis>
<issues>
[List of specific schema issues that need to be addressed]
</issues>
<improvements>
[Specific changes recommended to address each issue]
</improvements>
<refined_schema>
{
  // Your complete refined schema here
}
</refined_schema>
Ensure your refined schema is backward compatible with successful
cases while extending to cover the failure cases.
"""
)

CONDITION_JUDGE_TEMPLATE = Template(
    """You judge whether an extracted attribute value satisfies a natural-language condition.

Attribute path: $path
Condition: $condition
Extracted value: $value

Answer with exactly one word inside <verdict></verdict> tags: PASS if the value
satisfies the condition, FAIL otherwise.
"""
)


def output_skeleton(schema: SchemaDoc) -> Any:
    """Output-shape skeleton mirroring the schema: leaves null, arrays one item."""

    def walk(spec):
        if spec.kind == "object":
            return {name: walk(child) for name, child in spec.children.items()}
        if spec.kind == "array" and spec.item is not None:
            return [walk(spec.item)]
        return None

    return walk(schema.root)


def render_base_prompt(schema: SchemaDoc, source_text: str) -> str:
    head = BASE_EXTRACTION_TEMPLATE.substitute(
        attribute_schema=canonical_serialize(schema),
        attribute_val_format=json.dumps(output_skeleton(schema), sort_keys=True, ensure_ascii=False),
    )
    return head + source_text


def render_generator_prompt(task: str) -> str:
    return SCHEMA_GENERATOR_TEMPLATE.substitute(task=task)


def render_synthetic_prompt(schema: SchemaDoc, task: str, serialized_seeds: str) -> str:
    return SYNTHETIC_DATA_TEMPLATE.substitute(
        schema=canonical_serialize(schema), task=task, user_samples=serialized_seeds
    )


def render_refiner_prompt(schema: SchemaDoc, task: str, serialized_failures: str) -> str:
    return SCHEMA_REFINER_TEMPLATE.substitute(
        task=task, schema=canonical_serialize(schema), eval_samples=serialized_failures
    )


def render_condition_prompt(path: str, condition: str, value: Any) -> str:
    return CONDITION_JUDGE_TEMPLATE.substitute(
        path=path, condition=condition, value=json.dumps(value, ensure_ascii=False)
    )
