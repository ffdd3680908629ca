# -*- coding: utf-8 -*-
#
# personsig documentation build configuration file.

import sys
import os

import sphinx_rtd_theme

# the package is documented from the source tree
sys.path.insert(0, os.path.abspath('..'))

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.doctest',
    'sphinx.ext.intersphinx',
    'sphinx.ext.todo',
    'numpydoc',
    'sphinx.ext.ifconfig',
    'sphinx.ext.viewcode',
    'sphinx.ext.imgmath',
]

autosummary_generate = True
numpydoc_show_class_members = False
autodoc_default_options = {'members': True, 'inherited-members': True}
autodoc_mock_imports = ['torch', 'skimage']

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = u'personsig'
version = '0.0.1'
release = '0.0.1'

exclude_patterns = ['_build']
pygments_style = 'sphinx'

html_theme = 'sphinx_rtd_theme'
html_theme_path = [sphinx_rtd_theme.get_html_theme_path()]
html_static_path = ['_static']
htmlhelp_basename = 'personsigdoc'

latex_elements = {
}
latex_documents = [
    ('index', 'personsig.tex', u'personsig Documentation', u'', 'manual'),
]
man_pages = [
    ('index', 'personsig', u'personsig Documentation', [], 1)
]

intersphinx_mapping = {
    'python': ('https://docs.python.org/3', None),
    'numpy': ('https://numpy.org/doc/stable/', None),
    'torch': ('https://pytorch.org/docs/stable/', None),
}
