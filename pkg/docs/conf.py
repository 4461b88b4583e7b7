import tinylcn

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.autosummary",
    "sphinx.ext.mathjax",
    "sphinx.ext.napoleon",
    "sphinx.ext.viewcode",
    "myst_nb",
]

myst_enable_extensions = ["dollarmath", "colon_fence"]
master_doc = "index"
source_suffix = {
    ".rst": "restructuredtext",
    ".md": "myst-nb",
}
templates_path = ["_templates"]

# General information about the project.
project = "tinylcn"
copyright = "2026, the tinylcn developers"
version = tinylcn.__version__
release = tinylcn.__version__

exclude_patterns = ["_build"]
html_theme = "sphinx_book_theme"
html_title = "tinylcn"
html_show_sourcelink = False
html_theme_options = {
    "path_to_docs": "docs",
    "use_edit_page_button": False,
    "use_download_button": True,
}
nb_execution_mode = "off"

autodoc_type_aliases = {
    "JAXArray": "tinylcn.helpers.JAXArray",
}
