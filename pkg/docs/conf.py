# Configuration file for the Sphinx documentation builder.
#
# For the full list of built-in configuration values, see the documentation:
# https://www.sphinx-doc.org/en/master/usage/configuration.html

# -- Project information -----------------------------------------------------
# https://www.sphinx-doc.org/en/master/usage/configuration.html#project-information

from importlib import metadata

copyright = "2026, inverse_cascade contributors"  # pylint:disable=redefined-builtin
author = "inverse_cascade contributors"
release = metadata.version("inverse_cascade")
project = f"inverse_cascade {release}"


# -- General configuration ---------------------------------------------------
# https://www.sphinx-doc.org/en/master/usage/configuration.html#general-configuration

extensions = ["sphinx_rtd_theme", "sphinx.ext.napoleon", "sphinx.ext.mathjax", "autoapi.extension"]

templates_path = ["_templates"]
exclude_patterns = ["_build", "Thumbs.db", ".DS_Store"]


# -- Options for HTML output -------------------------------------------------
# https://www.sphinx-doc.org/en/master/usage/configuration.html#options-for-html-output

html_theme = "sphinx_rtd_theme"

autoapi_dirs = ["../inverse_cascade"]
autoapi_ignore = ["*autocomplete*"]


numpydoc_show_class_members = False

autosummary_generate = True
