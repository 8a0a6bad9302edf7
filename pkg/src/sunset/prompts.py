"""Prompt templates for generation, inference, and rating.

Placeholders use ``{name}`` and are substituted by :func:`fill` in a single
pass, so braces inside the JSON examples below and any braces inside
substituted values are left untouched.
"""
from __future__ import annotations

import re
from typing import Any

_PLACEHOLDER = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


def fill(template: str, **values: Any) -> str:
    """Substitute ``{name}`` placeholders in one pass; unknown names stay put."""

    def repl(m: re.Match) -> str:
        name = m.group(1)
        return str(values[name]) if name in values else m.group(0)

    return _PLACEHOLDER.sub(repl, template)


def format_numbered(items: list[str]) -> str:
    """Render an evidence list as the numbered form used in prompts."""
    return "\n".join(f"[{i}] {item}" for i, item in enumerate(items, start=1))


NO_REPEAT_TITLES = "Please do not use any of the following titles:"


TITLES = """Imagine that you must write a book. This book can be either fiction or non-fiction.

You can select any subject to write your book about. Please make the book interesting.

Please write a list of {n_titles} possible book titles.

Please only generate the title for each book.

Please include a mix of fiction and non-fiction, and please try to cover as many genres as possible.

Please make each book title unique.

Please make the style of each book title as different as possible, and don't repeat title styles.

Please generate titles for books which will have a broad range of appeal.

Please generate titles for books which will require a broad range of reading levels.

Please try to make each title as different as possible.

Please do not include many titles with a colon (:).

{prev_titles_prompt}

**OUTPUT FORMAT**

Please separate each book title with a newline character ("\\n")"""


OUTLINE = """Imagine that you must write a book. This book can be either fiction or non-fiction.

This is the title of your book: {title}

Please write an outline of this book. Please include the title of the book, and a list of chapters or sections that the book will contain. The book should have {n_sections} sections or chapters.

**OUTPUT FORMAT**

Please output the outline as a JSON object where the keys are the chapters and the values are a brief outline of the chapter.

In other words, as:

```python
{
'Chapter 1': 'Chapter 1 outline',
'Chapter 2': 'Chapter 2 outline',
...
'Chapter N': 'Chapter N outline'
}
```"""


QUERIES = """Imagine that you must write a book. You are given the following outline of the book

{outline}

Please write a list of 5 questions about the book which summarize the book.

Please try to cover different general aspects of the content.

Please make the questions very concise.

**OUTPUT FORMAT**

Please separate each question with a single newline character ("\\n")"""


SUMMARY_EVIDENCE = """Imagine that you are writing a book. This is an outline of the book

{outline}

Please address the following question about the book:

{question}

Please write a summary which addresses the question. Please make the summary as specific and detail oriented as possible. Please include actual examples from the book when possible. Please do not write more than is absolutely necessary.

After you write the summary, please write exact quotes and passages you will include in the book, from which the summary could be written. Please include at least {n_evidence} of these passages, which you intend to include verbatim in the book. Please indicate the exact chapter where the passages will be written in a separate field.

**OUTPUT FORMAT**

Please a JSON object with two fields: "summary", "evidence", and "chapter". The summary field should have the summary. The evidence field should have a list of evidence sentences from the book. The chapter field should have the exact chapter where the corresponding evidence sentence will appear. Please only indicate the chapter number for this field. There should be the same number of elements in the "evidence" field as there are in the "chapter" field. In other words, as:

```python
{
'summary': 'Summary text',
'evidence': ['evidence sentence 1', 'evidence sentence 2', ...]
'chapter': [1, 4, ...]
}
```"""


SECTION = """Imagine that you must write a book. You are given the following outline of the book

{outline}

Please write the following chapter of the book in its entirety:

{chapter}

Please also include the following sentences somewhere in the chapter. You must include these passages verbatim (i.e., EXACTLY as is). It is imperative that you do this, otherwise the book will be incomplete:

{evidence}

**OUTPUT FORMAT**

Please wrap the content of the chapter you write in a markdown codeblock, in other words, like:

```
content
```"""


RETRIEVE_PASSAGE = """Please read the following book chapter:

{chapter}

The following passage should have been included in the chapter but was not:

{passage}

Please retrieve the passage from the chapter which is CLOSEST to the given passage.

**OUTPUT FORMAT**

Please wrap the passage in a markdown codeblock, in other words, like:

```
passage
```"""


REFINE = """Imagine that you are giving an exam about a book. This is the book

{book}

On an exam, you are asked to summarize the book with respect to this question:

{question}

This is the summary that you are grading:

{summary}

Please rewrite this response so that it is totally accurate and fully addresses the question.

Please make the response as specific and detail oriented as possible. The following passages from the document should help in crafting the response:

{passages}

**OUTPUT FORMAT**

Please wrap the content of the summary you write in a markdown codeblock, in other words, like:

```
content
```"""


CITANCES = """Imagine that you have written a research essay about a book. You have also extracted passages from the book which you used to write the essay.

Your job is to add citations to the essay which properly reference the passages that you have extracted.

Here is the essay:

{essay}

And here are the evidence passages from the book, each of which is given a number:

{evidence}

Please add citations to all citation-worthy statements in the essay using the numbered evidence list, by indicating the citation numbers of the corresponding evidence. More specifically, add the citation number at the end of each relevant sentence in the essay before the punctuation mark e.g., 'This work shows the effectiveness of problem X [1].' when the passage [1] in the evidence list provides full support for the statement. Only add a citation if it is fully relevant and unambiguously supportive of that sentence. Not all evidences may be relevant, so only cite those that directly support the statement. Please do not add any explanations or justifications for the evidence, simply indicate the evidence numbers if they are relevant. If a sentence does not use any of the provided evidence, please simply copy the sentence as is and do not add anything to the end of it. If multiple evidences support a statement, please cite them together (e.g., [1][2]). For each citation-worthy statement, you only need to add at least one citation, so if multiple evidences support the statement, just add the most relevant citation to the sentence."""


VALIDATE = """Imagine that you are judging the quality of a summary of a book. This is the book

{book}

Here is a question about the book:

{question}

And here is the summary which addresses the question:

{summary}

Please judge if you think that the summary meets ALL of the following criteria:

1) The summary is absolutely faithful to the book (in other words, all of the information in the summary is contained in the book)

2) The summary FULLY addresses the question

Please think carefully about your answer. If you think that ALL of the criteria are met, please simply respond with "YES".

Otherwise, please simply respond with "NO"."""


BASELINE_SINGLE_PROMPT = """Imagine that you must write a book. This book can be either fiction or non-fiction.

You can select any subject to write your book about. Please make the book interesting.

Please perform the following tasks and output everything in as a JSON object:

Please write the title of the book.
{title_prompt}

Then, please write an outline of this book. Please include a list of chapters or sections that the book will contain. The book should have {n_sections} sections or chapters.

Then, please write a list of 5 questions about the book which summarize the book.

Then, please write a summary for each question which addresses the question.

Then, please write the entire contents of the book. The book should be long, and you should write out the ENTIRE content.

Then, extract specific passages from the book for each summary which serve as evidence for the summary.

**OUTPUT FORMAT**
Please create a well-formatted JSON object with the following fields:

title: The title of the book (formatted as a string)
outline: The outline of the book (formatted as a string)
questions: The questions about the book (formated as a list)
summaries: The summaries addressing each question (formatted as a list of the same length as "questions")
document: The full book (formatted as a string)
evidence: A list of evidence passages (formatted as a list of the same length as "questions")"""


GENERATION = """Your task is to read a document and then write an essay which addresses the following question: {question_text}

To write your essay, you should read the document and identify key passages which will help guide your response. Extract every passage which is directly relevant for your essay. Please copy each extracted passage to a list in the format specified below. Please copy the exact text of each passage (do NOT paraphrase!). Then, write your essay which addresses the query.

Please add citations to all citation-worthy statements using the extracted evidence, by indicating the citation numbers of the corresponding evidence. More specifically, add the citation number at the end of each relevant sentence before the punctuation mark e.g., 'This work shows the effectiveness of problem X [1].' when the passage [1] in the evidence list provides full support for the statement. Only add a citation if it is fully relevant and unambiguously supportive of that sentence. Not all evidences may be relevant, so only cite those that directly support the statement. Please do not add any explanations or justifications for the evidence, simply indicate the evidence numbers if they are relevant. If a sentence does not use any of the provided evidence, please simply copy the sentence as is and do not add anything to the end of it. If multiple evidences support a statement, please cite them together (e.g., [1][2]). For each citation-worthy statement, you only need to add at least one citation, so if multiple evidences support the statement, just add the most relevant citation to the sentence.

Please limit to only 10 pieces of evidence.

Here is the document: {context}

**OUTPUT FORMAT**
Output your response as:
EVIDENCE:
[1] Extracted passage 1
[2] Extracted passage 2
...
[N] Extracted passage N
RESPONSE:
response"""


COMBINE_SUMMARIES = """Here is a list of summaries of different sections of a document with respect to the query "{question_text}":

{context}

Please combine these summaries into a single summary which addresses the query. If a summary mentions that the query is not addressed, please ignore that summary. Please keep all relevant citations in the final summary. Here is a list of the original citations:

{evidence}"""


RELEVANCE = """You will be given one summary written for a document based on a query about that document.

Your task is to rate the summary on one metric with respect to the query.

Please make sure you read and understand these instructions carefully. Please keep this document open while reviewing, and refer to it as needed.

Evaluation Criteria: Relevance (1-5) - selection of important content from the source. The summary should include only important information from the source document which is relevant for the query. Annotators were instructed to penalize summaries which contained redundancies, excess information, and information which does not address the query.

Evaluation Steps:

1. Read the query, the summary, and the source document carefully.
2. Compare the summary to the query and the source document and identify the main point of the document which is relevant to the query.
3. Assess how well the summary covers the main points of the source document which are relevant to the query, and how much irrelevant or redundant information it contains.
4. Assign a relevance score from 1 to 5.

Example:

Source Text:

{document}

Query:

{query}

Summary:

{summary}

Evaluation Form (scores ONLY): - Relevance:"""


# Variant with the query field and every reference to queries removed, used
# when scoring an evidence passage against its citing sentence.
RELEVANCE_NO_QUERY = """You will be given one summary written for a document.

Your task is to rate the summary on one metric.

Please make sure you read and understand these instructions carefully. Please keep this document open while reviewing, and refer to it as needed.

Evaluation Criteria: Relevance (1-5) - selection of important content from the source. The summary should include only important information from the source document. Annotators were instructed to penalize summaries which contained redundancies and excess information.

Evaluation Steps:

1. Read the summary and the source document carefully.
2. Compare the summary to the source document and identify the main points of the document.
3. Assess how well the summary covers the main points of the source document, and how much irrelevant or redundant information it contains.
4. Assign a relevance score from 1 to 5.

Example:

Source Text:

{document}

Summary:

{summary}

Evaluation Form (scores ONLY): - Relevance:"""


CONSISTENCY = """You will be given one summary written for a document based on a query about that document.

Your task is to rate the summary on one metric.

Please make sure you read and understand these instructions carefully. Please keep this document open while reviewing, and refer to it as needed.

Evaluation Criteria:

Consistency (1-5) - the factual alignment between the summary and the summarized source with respect to the query. A factually consistent summary contains only statements that are entailed by the source document. Annotators were also asked to penalize summaries that contained hallucinated facts.

Evaluation Steps:

1. Read the source document carefully and identify the main facts and details it presents with respect to the query.
2. Read the summary and compare it to the source document. Check if the summary contains any factual errors that are not supported by the source document.
3. Assign a score for consistency based on the Evaluation Criteria.

Example:

Source Text:

{document}

Query:

{query}

Summary:

{summary}

Evaluation Form (scores ONLY): - Consistency:"""


CONSISTENCY_NO_QUERY = """You will be given one summary written for a document.

Your task is to rate the summary on one metric.

Please make sure you read and understand these instructions carefully. Please keep this document open while reviewing, and refer to it as needed.

Evaluation Criteria:

Consistency (1-5) - the factual alignment between the summary and the summarized source. A factually consistent summary contains only statements that are entailed by the source document. Annotators were also asked to penalize summaries that contained hallucinated facts.

Evaluation Steps:

1. Read the source document carefully and identify the main facts and details it presents.
2. Read the summary and compare it to the source document. Check if the summary contains any factual errors that are not supported by the source document.
3. Assign a score for consistency based on the Evaluation Criteria.

Example:

Source Text:

{document}

Summary:

{summary}

Evaluation Form (scores ONLY): - Consistency:"""
