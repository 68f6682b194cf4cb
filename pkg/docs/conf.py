# Sphinx configuration for the GraphSurgeon documentation.

import os
import re
import sys

sys.path.insert(0, os.path.abspath('..'))

# Read the version without importing numpy/scipy at docs build time
with open(os.path.join(os.path.abspath('..'), 'graph_surgeon', '__init__.py'), encoding='utf-8') as f:
    version_match = re.search(r"^__version__ = ['\"]([^'\"]*)['\"]", f.read(), re.M)
    version = version_match.group(1) if version_match else '0.1.0'

project = 'GraphSurgeon'
copyright = '2025, GraphSurgeon developers'
author = 'GraphSurgeon developers'
release = version

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.viewcode',
    'sphinx.ext.napoleon',
    'sphinx.ext.intersphinx',
    'sphinx.ext.mathjax',
]

try:
    import sphinx_autodoc_typehints  # noqa: F401
    extensions.append('sphinx_autodoc_typehints')
except ImportError:
    print("Note: sphinx_autodoc_typehints not found; type hints stay in signatures.")

templates_path = ['_templates']
exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']

try:
    import sphinx_rtd_theme  # noqa: F401
    html_theme = 'sphinx_rtd_theme'
except ImportError:
    html_theme = 'alabaster'

# Google-style docstrings throughout the package
napoleon_google_docstring = True
napoleon_numpy_docstring = False
napoleon_include_init_with_doc = True
napoleon_use_param = True
napoleon_use_rtype = True

intersphinx_mapping = {
    'python': ('https://docs.python.org/3', None),
    'numpy': ('https://numpy.org/doc/stable/', None),
    'scipy': ('https://docs.scipy.org/doc/scipy/', None),
}

autodoc_member_order = 'bysource'
# Keep autodoc importable without the numerical stack installed
autodoc_mock_imports = ['sklearn']

if 'sphinx_autodoc_typehints' in extensions:
    autodoc_typehints = 'description'
